#pragma once

#include "ppgan/field_sim.hpp"
#include "ppgan/gan_config.hpp"
#include "ppgan/predict.hpp"

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace ppgan::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitRuntime = 2;

/// Everything a pipeline run can be configured with; each subcommand reads
/// the sections it needs.
struct RunConfig {
    SimConfig sim = default_sim_config(22, 0, 12, 0);
    TrainConfig train;
    ClassifierSpec classifier;
    double margin = kDefaultMargin;
    int bins = 256;
    std::map<Health, int> augment{{Health::healthy, 50}, {Health::unhealthy, 10}};
    int test_size = 20;
    int generate_count = 64;
};

RunConfig load_run_config(const std::string& path);
nlohmann::json run_config_json(const RunConfig& c);

/// Entry point; args exclude the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace ppgan::cli
