#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "skinseg/skinny.hpp"
#include "skinseg/train.hpp"

namespace skinseg::cli {

enum ExitCode : int { kOk = 0, kUserError = 1, kInternalError = 2 };

/// Runs one subcommand. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Named stream derived from the global seed (splitmix64 of seed ^ fnv1a(name)).
std::uint64_t derive_seed(std::uint64_t seed, std::string_view name);

struct DeskConfig {
    std::uint64_t seed = 17;
    int samples = 64;
    int size = 48;
    int bins = 32;
    skinny::NetworkConfig arch{3, 3, 8, false, false, 0};
    int epochs = 30;
    int ensemble_epochs = 30;
    double lr = 3e-3;
    int batch_size = 4;
    int pr_steps = 256;
};

/// The full desk experiment. Writes data/, models/, ensembles/, reports/,
/// results.csv, pr_curves.json and wilcoxon.json under `out_dir`; every artifact is
/// a pure function of `cfg`. Progress lines go to `log`.
void reproduce_desk(const DeskConfig& cfg, const std::filesystem::path& out_dir, std::ostream& log);

}  // namespace skinseg::cli
