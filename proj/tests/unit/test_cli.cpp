#include <gtest/gtest.h>

#include <json.hpp>

#include <sstream>

#include "attralign/attribgen/pipeline.hpp"
#include "attralign/binary_io.hpp"
#include "attralign/dataset.hpp"
#include "attralign/mining.hpp"
#include "cli.hpp"
#include "mock_chat.hpp"
#include "test_util.hpp"

using namespace attralign;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "attralign");
  std::ostringstream out, err;
  const int code = cli::dispatch(args, out, err);
  return {code, out.str(), err.str()};
}

// A small dataset written once per test.
fs::path small_dataset(const fs::path& dir, const std::string& classes = "4") {
  const fs::path ds = dir / "ds";
  const Result r = run({"gen-synth", "--classes", classes, "--per-class", "10", "--dim-object", "6", "--dim-text",
                        "6", "--seed", "3", "-o", ds.string()});
  EXPECT_EQ(r.code, 0) << r.err;
  return ds;
}

std::vector<std::string> quick_train(const fs::path& ds, const fs::path& out) {
  return {"train", "--dataset", ds.string(), "--out-dim", "4", "--hidden", "8", "--s1-epochs", "2", "--s1-batch",
          "16", "--s2-epochs", "1", "--s2-batch", "16", "--threads", "1", "-o", out.string()};
}

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(read_text_file(p)); }

}  // namespace

TEST(Cli, GenerateThenTrainWritesManifest) {
  const auto dir = testutil::scratch_dir();
  const fs::path ds = small_dataset(dir);
  EXPECT_TRUE(fs::exists(ds / "manifest.json"));

  const Result r = run(quick_train(ds, dir / "run"));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("steps "), std::string::npos);
  for (const char* f : {"history.tsv", "run.json", "metrics.json", "metrics.tsv", "confusion.txt", "manifest.json"}) {
    EXPECT_TRUE(fs::exists(dir / "run" / f)) << f;
  }
  const auto m = read_json(dir / "run" / "manifest.json");
  EXPECT_EQ(m["command"], "train");
  EXPECT_EQ(m["config"]["s1-epochs"], "2");
  EXPECT_EQ(m["config"]["mode"], "two-stage");
  EXPECT_EQ(m["inputs"][ds.string()], cli::digest_path(ds));
  EXPECT_EQ(m["outputs"][(dir / "run" / "history.tsv").string()], cli::digest_path(dir / "run" / "history.tsv"));
}

TEST(Cli, TrainWithoutDatasetIsUsageError) {
  const Result r = run({"train"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("--dataset"), std::string::npos);
  EXPECT_NE(r.err.find("Usage"), std::string::npos);
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"no-such-command"}).code, 2);
  EXPECT_EQ(run({"train", "--dataset", "x", "--s1-epochs", "many"}).code, 2);
}

TEST(Cli, HelpForEverySubcommand) {
  for (const char* sub : {"gen-synth", "inspect", "mine", "train", "ablate", "probe", "diag", "eval", "export",
                          "attribgen"}) {
    const Result r = run({sub, "--help"});
    EXPECT_EQ(r.code, 0) << sub;
    EXPECT_FALSE(r.out.empty()) << sub;
  }
  for (const char* step : {"discover", "extract", "summarize", "run"}) {
    EXPECT_EQ(run({"attribgen", step, "--help"}).code, 0) << step;
  }
  EXPECT_EQ(run({"--help"}).code, 0);
}

TEST(Cli, MineOnTwoClassesClampsWithWarning) {
  const auto dir = testutil::scratch_dir();
  const fs::path ds = small_dataset(dir, "2");
  const Result r = run({"mine", "--dataset", ds.string(), "--k", "3", "-o", (dir / "negs.txt").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.err.find("warning"), std::string::npos);
  const HardNegativeSet set = load_negatives(dir / "negs.txt");
  for (const auto& [id, negs] : set.entries) EXPECT_EQ(negs.size(), 1u);
  EXPECT_TRUE(fs::exists(dir / "negs.txt.manifest.json"));
}

TEST(Cli, ConfigFileValuesYieldToFlags) {
  const auto dir = testutil::scratch_dir();
  const fs::path ds = small_dataset(dir);
  write_text_file(dir / "cfg.toml", "[train]\ns1-epochs = 3\nseed = 5\ntemperature = 0.5\n");
  std::vector<std::string> args = quick_train(ds, dir / "run");
  args.insert(args.begin(), {"--config", (dir / "cfg.toml").string()});
  const Result r = run(args);
  ASSERT_EQ(r.code, 0) << r.err;
  const auto m = read_json(dir / "run" / "manifest.json");
  EXPECT_EQ(m["config"]["s1-epochs"], "2");
  EXPECT_EQ(m["config"]["seed"], "5");
  EXPECT_EQ(m["config"]["temperature"], "0.5");
  EXPECT_EQ(m["seed"], 5);
}

TEST(Cli, DomainErrorsExitOne) {
  const auto dir = testutil::scratch_dir();
  const Result missing = run({"inspect", "--dataset", (dir / "absent").string()});
  EXPECT_EQ(missing.code, 1);
  EXPECT_NE(missing.err.find("error:"), std::string::npos);

  const fs::path ds = small_dataset(dir);
  std::vector<std::string> args = quick_train(ds, dir / "run");
  args.insert(args.end(), {"--temperature", "0"});
  EXPECT_EQ(run(args).code, 1);
  EXPECT_EQ(run({"eval", "--dataset", ds.string(), "--choices", "9"}).code, 1);
}

TEST(Cli, RepeatedTrainReproducesHistory) {
  const auto dir = testutil::scratch_dir();
  const fs::path ds = small_dataset(dir);
  ASSERT_EQ(run(quick_train(ds, dir / "a")).code, 0);
  ASSERT_EQ(run(quick_train(ds, dir / "b")).code, 0);
  EXPECT_EQ(read_text_file(dir / "a" / "history.tsv"), read_text_file(dir / "b" / "history.tsv"));
  EXPECT_EQ(read_text_file(dir / "a" / "run.json"), read_text_file(dir / "b" / "run.json"));
  EXPECT_EQ(cli::digest_path(dir / "a" / "checkpoint"), cli::digest_path(dir / "b" / "checkpoint"));
}

TEST(Cli, InspectMineTrainWithNegativesAndEvaluate) {
  const auto dir = testutil::scratch_dir();
  const fs::path ds = small_dataset(dir);
  const Result info = run({"inspect", "--dataset", ds.string()});
  ASSERT_EQ(info.code, 0) << info.err;
  EXPECT_NE(info.out.find("40"), std::string::npos);

  ASSERT_EQ(run({"mine", "--dataset", ds.string(), "-o", (dir / "negs.txt").string()}).code, 0);
  std::vector<std::string> args = quick_train(ds, dir / "run");
  args.insert(args.end(), {"--negatives", (dir / "negs.txt").string()});
  ASSERT_EQ(run(args).code, 0);
  const fs::path ckpt = dir / "run" / "checkpoint";

  const Result diag = run({"diag", "--dataset", ds.string(), "--checkpoint", ckpt.string(), "--probe", "-o",
                           (dir / "diag").string()});
  ASSERT_EQ(diag.code, 0) << diag.err;
  EXPECT_EQ(read_json(dir / "diag" / "metrics.json")["mc"]["accuracy"],
            read_json(dir / "run" / "metrics.json")["mc"]["accuracy"]);

  const Result eval = run({"eval", "--dataset", ds.string(), "--checkpoint", ckpt.string(), "--choices", "2"});
  EXPECT_EQ(eval.code, 0) << eval.err;
  const Result probe = run({"probe", "--dataset", ds.string(), "--features", "raw-object", "--epochs", "20"});
  EXPECT_EQ(probe.code, 0) << probe.err;
  const Result exported = run({"export", "--dataset", ds.string(), "--checkpoint", ckpt.string(), "--source",
                               "projected-object", "-o", (dir / "pca.tsv").string()});
  EXPECT_EQ(exported.code, 0) << exported.err;
  EXPECT_EQ(read_text_file(dir / "pca.tsv").rfind("label\t", 0), 0u);
}

TEST(Cli, AblateWritesReport) {
  const auto dir = testutil::scratch_dir();
  const fs::path ds = small_dataset(dir);
  const Result r = run({"ablate", "--dataset", ds.string(), "--seeds", "1", "--out-dim", "4", "--hidden", "8",
                        "--s1-epochs", "1", "--s2-epochs", "1", "-o", (dir / "ab").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string tsv = read_text_file(dir / "ab" / "ablation.tsv");
  for (const char* arm : {"reference", "simple-negatives", "object-category", "one-stage", "stage2-only"}) {
    EXPECT_NE(tsv.find(arm), std::string::npos) << arm;
  }
}

TEST(Cli, AttribgenRunFromReplayedTranscript) {
  const auto dir = testutil::scratch_dir();
  attribgen::save_corpus(mockchat::three_sample_corpus(), dir / "corpus.json");

  // record a transcript with the mock, then drive the command from it
  attribgen::MockTransport mock(mockchat::respond);
  attribgen::RecordingTransport recorder(mock);
  attribgen::ChatClient client(recorder, mockchat::fast_endpoint());
  const std::string expected = attribgen::triples_to_json(attribgen::run_pipeline(client, mockchat::three_sample_corpus()));
  recorder.save(dir / "transcript.jsonl");

  const Result r = run({"attribgen", "run", "--corpus", (dir / "corpus.json").string(), "--replay",
                        (dir / "transcript.jsonl").string(), "--cache", (dir / "cache").string(), "-o",
                        (dir / "triples.json").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(read_text_file(dir / "triples.json"), expected);
  EXPECT_NE(r.out.find("cache hits 0"), std::string::npos);

  const Result again = run({"attribgen", "run", "--corpus", (dir / "corpus.json").string(), "--replay",
                            (dir / "transcript.jsonl").string(), "--cache", (dir / "cache").string(), "-o",
                            (dir / "triples2.json").string()});
  ASSERT_EQ(again.code, 0) << again.err;
  EXPECT_NE(again.out.find("cache hits 16"), std::string::npos) << again.out;
  EXPECT_EQ(read_text_file(dir / "triples2.json"), expected);

  // the stepwise commands agree with the one-shot pipeline
  const auto replay = (dir / "transcript.jsonl").string();
  ASSERT_EQ(run({"attribgen", "discover", "--super", "aircraft", "--replay", replay, "-o",
                 (dir / "attrs.json").string()}).code, 0);
  ASSERT_EQ(run({"attribgen", "extract", "--corpus", (dir / "corpus.json").string(), "--attributes",
                 (dir / "attrs.json").string(), "--replay", replay, "-o", (dir / "extracted.json").string()}).code,
            0);
  ASSERT_EQ(run({"attribgen", "summarize", "--triples", (dir / "extracted.json").string(), "--replay", replay, "-o",
                 (dir / "summarized.json").string()}).code, 0);
  EXPECT_EQ(read_text_file(dir / "summarized.json"), expected);
}

TEST(Cli, AttribgenUnreachableEndpointIsDomainError) {
  const auto dir = testutil::scratch_dir();
  const Result r = run({"attribgen", "discover", "--super", "aircraft", "--base-url", "http://127.0.0.1:1",
                        "--retries", "0", "--timeout-ms", "200", "-o", (dir / "attrs.json").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("giving up"), std::string::npos);
}

TEST(DigestPath, DirectoryDigestTracksContents) {
  const auto dir = testutil::scratch_dir();
  fs::create_directories(dir / "d" / "sub");
  write_text_file(dir / "d" / "a.txt", "a");
  write_text_file(dir / "d" / "sub" / "b.txt", "b");
  const std::string before = cli::digest_path(dir / "d");
  EXPECT_EQ(cli::digest_path(dir / "d" / "a.txt"), sha256_hex("a"));
  write_text_file(dir / "d" / "sub" / "b.txt", "B");
  EXPECT_NE(cli::digest_path(dir / "d"), before);
}
