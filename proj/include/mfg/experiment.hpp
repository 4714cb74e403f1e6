#pragma once

#include <map>
#include <stdexcept>
#include <string>

#include "mfg/lipsolve.hpp"
#include "mfg/report.hpp"

namespace mfg {

// Invalid experiment configuration (unknown keys, unresolved model names,
// out-of-range values).  The CLI maps this to exit status 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// One experiment = one JSON config file.  Schema (all fields optional, shown
// with defaults; unknown keys are rejected):
//   {
//     "kind": "solve",            // solve | verify-monotone | oracle-compare |
//                                 // blowup-scan | transform-check | dpp-audit
//     "model": {"name": "lq", "params": {}},
//     "horizon": 0.5,
//     "sim": {"dt": 0.01, "n_particles": 100, "n_paths": 100,
//             "seed": 1, "threads": 1},
//     "picard": {"damping": 0.5, "tol": 1e-5, "max_iters": 100,
//                "ridge_lambda": 1e-5},
//     "probes": 20,
//     "probe_seed": 404,
//     "out": "out"
//   }
struct ExperimentConfig {
  std::string kind = "solve";
  std::string model = "lq";
  std::map<std::string, double> model_params;
  double horizon = 0.5;
  SimConfig sim;
  PicardOptions picard;
  int probes = 20;
  std::uint64_t probe_seed = 404;
  std::string out_dir = "out";

  Json to_json() const;
  static ExperimentConfig from_json(const Json& j);  // throws ConfigError
  // The config as echoed into report.json: to_json() minus the fields that do
  // not affect the numbers (sim.threads, out) so reports stay byte-identical
  // across thread counts.
  Json report_echo() const;
  ModelSpec resolve_model() const;  // throws ConfigError on bad name/params
  void validate() const;            // kind known, ranges sane, model resolves
};

struct ExperimentResult {
  int status = 0;  // 0 all verdicts pass, 1 otherwise
  bool pass = false;
  Json report;           // report.json content
  std::string summary;   // summary.txt content
  // All artifact files by name, including report.json and summary.txt.
  std::map<std::string, std::string> files;
};

// Runs the configured pipeline and assembles the artifacts in memory; writes
// nothing to disk.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

// Dumps result.files into out_dir (created if missing).
void write_artifacts(const ExperimentResult& result, const std::string& out_dir);

}  // namespace mfg
