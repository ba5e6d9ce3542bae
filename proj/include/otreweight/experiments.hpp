#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace otrw {

// One subcommand run. Each writes its CSV tables into out_dir and returns
// the JSON report (effective configuration with defaults filled in, seed,
// results). Reports carry no timing or thread count, so reruns with the
// same configuration and seed are byte-identical whatever the job count.
struct RunOutput {
  nlohmann::json report;
  std::vector<std::string> files;  // CSV files written, relative to out_dir
};

RunOutput run_survey_experiment(const nlohmann::json& config, std::uint64_t seed,
                                const std::filesystem::path& out_dir, int jobs);
RunOutput run_fairness_experiment(const nlohmann::json& config, std::uint64_t seed,
                                  const std::filesystem::path& out_dir, int jobs);
RunOutput run_portfolio_experiment(const nlohmann::json& config, std::uint64_t seed,
                                   const std::filesystem::path& out_dir, int jobs);
RunOutput run_reweight(const nlohmann::json& config, std::uint64_t seed,
                       const std::filesystem::path& out_dir, int jobs);

// Dispatches on the subcommand name and writes report.json next to the
// CSV files. Throws ConfigError for an unknown command.
RunOutput run_command(const std::string& command, const nlohmann::json& config, std::uint64_t seed,
                      const std::filesystem::path& out_dir, int jobs);

}  // namespace otrw
