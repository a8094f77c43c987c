// Copyright 2026 The SkeleFusion Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Runs the command-line binary and checks exit codes and outputs.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>

#include "skelefusion/skelefusion.h"

namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string err;
};

const fs::path& scratch() {
  static const fs::path dir = [] {
    const auto d = fs::temp_directory_path() / "skf_cli_test";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Result cli(const std::string& args) {
  const fs::path err = scratch() / "stderr.txt";
  const std::string cmd = std::string("'") + SKF_CLI_PATH + "' " + args + " >/dev/null 2>'" + err.string() + "'";
  const int status = std::system(cmd.c_str());
  return {status == -1 ? -1 : WEXITSTATUS(status), slurp(err)};
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

std::size_t count_ext(const fs::path& dir, const std::string& ext) {
  std::size_t n = 0;
  for (const auto& e : fs::directory_iterator(dir)) n += e.path().extension() == ext;
  return n;
}

}  // namespace

TEST_CASE("synth then render gives one svg per frame") {
  const auto dir = scratch() / "synth";
  REQUIRE(cli("synth --frames 24 --joints 12 --bpm 120 --seed 3 --out " + q(dir)).code == 0);
  CHECK(fs::exists(dir / "dance.json"));
  CHECK(fs::exists(dir / "dance.wav"));
  REQUIRE(cli("render --in " + q(dir / "dance.json") + " --out " + q(scratch() / "frames") + " --format svg").code == 0);
  CHECK(count_ext(scratch() / "frames", ".svg") == 24);
  REQUIRE(cli("render --in " + q(dir / "dance.json") + " --out " + q(scratch() / "dump") + " --format csv").code == 0);
  CHECK(fs::exists(scratch() / "dump" / "joints.csv"));
}

TEST_CASE("corrupt at rate 0 keeps the sequence") {
  const auto dir = scratch() / "c0";
  REQUIRE(cli("synth --frames 20 --joints 8 --bpm 100 --seed 1 --out " + q(dir)).code == 0);
  REQUIRE(cli("corrupt --in " + q(dir / "dance.json") + " --rate 0 --seed 4 --out " + q(dir / "same.json")).code == 0);
  skf_sequence* a = nullptr;
  skf_sequence* b = nullptr;
  REQUIRE(skf_sequence_load((dir / "dance.json").string().c_str(), &a) == SKF_OK);
  REQUIRE(skf_sequence_load((dir / "same.json").string().c_str(), &b) == SKF_OK);
  REQUIRE(skf_sequence_frames(a) == skf_sequence_frames(b));
  CHECK(std::memcmp(skf_sequence_data(a), skf_sequence_data(b), 20 * 8 * 2 * sizeof(double)) == 0);
  if (const unsigned char* m = skf_sequence_mask(b)) {
    for (int i = 0; i < 160; ++i) CHECK(m[i] == 1);
  }
  skf_sequence_free(a);
  skf_sequence_free(b);

  REQUIRE(cli("corrupt --in " + q(dir / "dance.json") + " --rate 0.25 --seed 4 --out " + q(dir / "x1.json")).code == 0);
  REQUIRE(cli("corrupt --in " + q(dir / "dance.json") + " --rate 0.25 --seed 4 --out " + q(dir / "x2.json")).code == 0);
  CHECK(slurp(dir / "x1.json") == slurp(dir / "x2.json"));
}

TEST_CASE("usage errors exit 2") {
  CHECK(cli("").code == 2);
  CHECK(cli("synth --frames 10 --bogus 1 --out " + q(scratch() / "u")).code == 2);
  CHECK(cli("corrupt --in " + q(scratch() / "missing.json") + " --out " + q(scratch() / "o.json")).code == 2);
  CHECK(cli("corrupt --rate 0.1").code == 2);
  CHECK(cli("render --in " + q(scratch() / "synth" / "dance.json") + " --out " + q(scratch() / "r") + " --format png")
            .code == 2);
  const auto cfg = scratch() / "bad.cfg";
  std::ofstream(cfg) << "no_such_key = 1\n";
  const auto r = cli("train --config " + q(cfg) + " --out " + q(scratch() / "bad.ckpt"));
  CHECK(r.code == 2);
  CHECK(r.err.rfind("error: config:", 0) == 0);
  CHECK(std::count(r.err.begin(), r.err.end(), '\n') == 1);
}

TEST_CASE("data-format errors exit 4") {
  const auto junk = scratch() / "junk.json";
  std::ofstream(junk) << "{ not json";
  const auto r = cli("corrupt --in " + q(junk) + " --rate 0.1 --out " + q(scratch() / "j.json"));
  CHECK(r.code == 4);
  CHECK(r.err.rfind("error: parse:", 0) == 0);

  const auto ckpt = scratch() / "junk.ckpt";
  std::ofstream(ckpt) << "definitely not a checkpoint";
  CHECK(cli("reconstruct --ckpt " + q(ckpt) + " --in " + q(scratch() / "synth" / "dance.json") + " --out " +
            q(scratch() / "r.json"))
            .code == 4);
}

TEST_CASE("generation without a diffusion stage is a config error") {
  const auto cfg = scratch() / "tiny.cfg";
  std::ofstream(cfg) << "joints = 12\nseq_len = 8\nd_model = 8\nn_heads = 2\nlatent_dim = 4\n"
                        "n_spatial_layers = 1\nn_temporal_layers = 1\nsteps = 3\nsynth_count = 2\n";
  REQUIRE(cli("train --config " + q(cfg) + " --out " + q(scratch() / "tiny.ckpt")).code == 0);
  const auto r = cli("generate --ckpt " + q(scratch() / "tiny.ckpt") + " --frames 8 --out " + q(scratch() / "g.json"));
  CHECK(r.code == 2);
  CHECK(r.err.rfind("error: config:", 0) == 0);
  CHECK(!fs::exists(scratch() / "g.json"));
}

TEST_CASE("runtime errors exit 3") {
  const auto blocker = scratch() / "plain_file";
  std::ofstream(blocker) << "x";
  const auto r = cli("synth --frames 10 --joints 4 --out " + q(blocker / "sub"));
  CHECK(r.code == 3);
  CHECK(r.err.rfind("error: io:", 0) == 0);
}
