#pragma once

#include <functional>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "spatialspill/estimators.hpp"
#include "spatialspill/ingest.hpp"
#include "spatialspill/weights.hpp"

namespace spatialspill::cli {

// Temp-file-then-rename; the destination never holds a partial file.
void write_atomic(const std::string& path,
                  const std::function<void(std::ostream&)>& writer);

uint64_t hash_file(const std::string& path);

// Records resolved options, input hashes and outputs; writes
// "<first output>.manifest.json" on finish().
class RunRecorder {
 public:
  RunRecorder(std::string subcommand, uint64_t seed, int threads);
  void option(const std::string& name, const std::string& value);
  void input(const std::string& path);
  void output(const std::string& path);
  void finish();

 private:
  std::string subcommand_;
  std::vector<std::pair<std::string, std::string>> options_;
  std::vector<std::pair<std::string, std::string>> inputs_;
  std::vector<std::string> outputs_;
};

// Reads .gal (binary contiguity, then normalized) or .wm weights and aligns
// them to the table's region order when ids are available.
WeightsMatrix load_weights(const std::string& path, const std::string& normalization,
                           const AttributeTable* table, RunRecorder& recorder);

struct ReproduceOptions {
  std::string data_path;
  std::string geometry_path;
  std::string id_column = "region_id";
  std::string id_property = "region_id";
  std::string ontario_ids_path;
  std::string toronto_ids_path;
  std::string out_dir;
  uint64_t seed = 0;
  int threads = 1;
  int draws = 1000;
  bool quiet = false;
};

int run_reproduce(const ReproduceOptions& opts, RunRecorder& recorder, std::ostream& out);

}  // namespace spatialspill::cli
