// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "t2t/decoding.hpp"
#include "t2t/hparams.hpp"

namespace t2t {

struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Fully resolved command line: flags plus the hparams set they select.
struct Invocation {
  std::string subcommand;
  std::string problem = "translate_copy";
  std::string model = "transformer";
  std::string hparams_set = "transformer_tiny";
  std::string hparams_overrides;
  std::uint64_t seed = 1;
  HParams hparams;

  std::string data_dir;
  std::string output_dir;
  int num_replicas = 1;
  int checkpoint_every = 500;
  int keep_last = 5;

  DecodeParams decode;
  std::string decode_from_file;
  std::string decode_to_file;
  std::string checkpoint;
  int average_last = 0;
  int decode_workers = 1;

  std::string out_path;      // avg-ckpt output, bench CSV, regress report
  std::string specs_path;    // regress
  std::string registry_kind; // registry

  // problem=... model=... hparams_set=... seed=...
  std::string header() const;
};

// Throws UsageError on unknown subcommands, unknown flags or bad values.
Invocation parse_invocation(const std::vector<std::string>& args);

// Exit codes: 0 success, 1 usage error, 2 runtime failure.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace t2t
