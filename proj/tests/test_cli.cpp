// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <fstream>
#include <sstream>

#include "t2t/checkpoint.hpp"
#include "t2t/cli.hpp"
#include "test_util.hpp"

using namespace t2t;
using t2t::testing::scratch_dir;

namespace {

struct Run {
  int code = 0;
  std::string out;
  std::string err;
};

Run run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  Run r;
  r.code = run_cli(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("usage errors exit 1") {
  CHECK(run({}).code == 1);
  CHECK(run({"frobnicate"}).code == 1);
  const Run unknown_flag = run({"datagen", "--data_dir=x", "--bogus=1"});
  CHECK(unknown_flag.code == 1);
  CHECK_FALSE(unknown_flag.err.empty());
  CHECK(unknown_flag.out.empty());
  CHECK(run({"datagen", "--problem=translate_nothing", "--data_dir=x"}).code == 1);
  CHECK(run({"train", "--model=lstm", "--data_dir=x", "--output_dir=y"}).code == 1);
  CHECK(run({"train", "--hparams_set=transformer_huge", "--data_dir=x", "--output_dir=y"}).code == 1);
  CHECK(run({"train", "--hparams=d_modle=3", "--data_dir=x", "--output_dir=y"}).code == 1);
  CHECK(run({"datagen"}).code == 1);
  CHECK(run({"decode", "--beam_size=0"}).code == 1);
  CHECK(run({"registry"}).code == 1);
  CHECK(run({"registry", "--kind=widgets"}).code == 1);
  CHECK(run({"--help"}).code == 1);
}

TEST_CASE("runtime failures exit 2") {
  const auto dir = scratch_dir("cli_runtime");
  const Run r = run({"decode", "--data_dir=" + (dir / "nothing").string(), "--decode_from_file=a",
                     "--decode_to_file=b", "--output_dir=" + dir.string()});
  CHECK(r.code == 2);
  CHECK(r.err.find("error:") != std::string::npos);
  CHECK(run({"avg-ckpt", "--output_dir=" + dir.string(), "--average_last=3"}).code == 2);
}

TEST_CASE("header line names the run") {
  const Run r = run({"registry", "--kind=models", "--seed=7", "--hparams=beam_size=2"});
  CHECK(r.code == 0);
  const auto lines = lines_of(r.out);
  REQUIRE(lines.size() == 2);
  CHECK(lines[0] ==
        "problem=translate_copy model=transformer hparams_set=transformer_tiny seed=7 hparams=beam_size=2");
  CHECK(lines[1] == "transformer");
}

TEST_CASE("registry listings are sorted") {
  const auto problems = lines_of(run({"registry", "--kind=problems"}).out);
  const std::vector<std::string> expect_problems{"translate_copy", "translate_reverse", "translate_toy_grammar"};
  CHECK(std::vector<std::string>(problems.begin() + 1, problems.end()) == expect_problems);
  const auto sets = lines_of(run({"registry", "--kind=hparams_sets"}).out);
  const std::vector<std::string> names(sets.begin() + 1, sets.end());
  CHECK(std::is_sorted(names.begin(), names.end()));
  CHECK(std::find(names.begin(), names.end(), "transformer_tiny") != names.end());
  CHECK(std::find(names.begin(), names.end(), "transformer_base_toy") != names.end());
}

TEST_CASE("decode flags default to beam 4, alpha 0.6, extra length 50") {
  const Invocation inv = parse_invocation({"decode"});
  CHECK(inv.decode.beam_size == 4);
  CHECK(inv.decode.alpha == 0.6);
  CHECK(inv.decode.extra_length == 50);
  CHECK_FALSE(inv.decode.dump_attention);
  const Invocation set = parse_invocation({"decode", "--hparams=beam_size=2,alpha=1.0"});
  CHECK(set.decode.beam_size == 2);
  CHECK(set.decode.alpha == 1.0);
  const Invocation flag = parse_invocation({"decode", "--hparams=beam_size=2", "--beam_size=6", "--extra_length=7"});
  CHECK(flag.decode.beam_size == 6);
  CHECK(flag.decode.extra_length == 7);
}

TEST_CASE("flag order does not matter") {
  const std::vector<std::string> a{"train", "--problem=translate_reverse", "--seed=3", "--data_dir=D",
                                   "--output_dir=O", "--train_steps=9", "--hparams=dropout=0.2"};
  const std::vector<std::vector<std::string>> orders{
      a,
      {"train", "--hparams=dropout=0.2", "--train_steps=9", "--output_dir=O", "--data_dir=D", "--seed=3",
       "--problem=translate_reverse"},
      {"train", "--seed", "3", "--output_dir", "O", "--problem", "translate_reverse", "--data_dir", "D",
       "--hparams", "dropout=0.2", "--train_steps", "9"}};
  const Invocation base = parse_invocation(a);
  CHECK(base.hparams.train_steps == 9);
  CHECK(base.hparams.dropout == 0.2);
  for (const auto& args : orders) {
    const Invocation inv = parse_invocation(args);
    CHECK(inv.header() == base.header());
    CHECK(same_values(inv.hparams, base.hparams));
    CHECK(inv.data_dir == base.data_dir);
    CHECK(inv.output_dir == base.output_dir);
  }
}

TEST_CASE("datagen, train, avg-ckpt and decode end to end") {
  const auto dir = scratch_dir("cli_e2e");
  const std::string data = (dir / "D").string(), out = (dir / "O").string();
  const std::vector<std::string> common{"--problem=translate_copy", "--hparams_set=transformer_test"};
  auto with = [&](std::vector<std::string> args) {
    args.insert(args.begin() + 1, common.begin(), common.end());
    return run(args);
  };

  Run r = with({"datagen", "--data_dir=" + data, "--seed=7"});
  REQUIRE(r.code == 0);
  for (const char* f : {"vocab.txt", "train.rec", "dev.rec"})
    CHECK(std::filesystem::exists(dir / "D" / "translate_copy" / f));

  r = with({"train", "--data_dir=" + data, "--output_dir=" + out, "--train_steps=6", "--checkpoint_every=2"});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("step=6") != std::string::npos);
  CHECK(std::filesystem::exists(dir / "O" / "metrics.jsonl"));
  CHECK(list_checkpoints(dir / "O").size() == 3);

  r = with({"avg-ckpt", "--output_dir=" + out, "--average_last=3", "--out=" + (dir / "avg.t2ck").string()});
  REQUIRE(r.code == 0);
  CHECK(load_checkpoint(dir / "avg.t2ck").step == 6);

  std::ofstream(dir / "in.txt") << "w3 w1\n\nw2\n";
  r = with({"decode", "--data_dir=" + data, "--output_dir=" + out, "--decode_from_file=" + (dir / "in.txt").string(),
            "--decode_to_file=" + (dir / "out.txt").string(), "--extra_length=2", "--decode_workers=2"});
  REQUIRE(r.code == 0);
  CHECK(lines_of(read_file(dir / "out.txt")).size() == 3);

  r = with({"decode", "--data_dir=" + data, "--checkpoint=" + (dir / "avg.t2ck").string(), "--dump_attention",
            "--decode_from_file=" + (dir / "in.txt").string(), "--decode_to_file=" + (dir / "avg.txt").string(),
            "--beam_size=1", "--extra_length=2"});
  REQUIRE(r.code == 0);
  CHECK(std::filesystem::exists(dir / "avg.txt.attn.2.json"));

  // a checkpoint from another architecture is rejected
  r = run({"decode", "--problem=translate_copy", "--hparams_set=transformer_tiny", "--data_dir=" + data,
           "--output_dir=" + out, "--decode_from_file=" + (dir / "in.txt").string(),
           "--decode_to_file=" + (dir / "bad.txt").string()});
  CHECK(r.code == 2);
}

TEST_CASE("bench writes CSV") {
  const auto dir = scratch_dir("cli_bench");
  const Run r = run({"bench", "--csv=" + (dir / "b.csv").string()});
  CHECK(r.code == 0);
  CHECK(read_file(dir / "b.csv").rfind("kind,axis,", 0) == 0);
}
