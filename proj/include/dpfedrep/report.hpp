#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "dpfedrep/experiment.hpp"

namespace dpfedrep {

inline constexpr const char* kCsvHeader =
    "method,epsilon,seed,excess_mse,zero_one_loss,dist_to_ustar,wall_time_ms,clip_rate";

/// RFC-4180 CSV with the fixed header; NA marks cells a method does not produce.
void write_csv(const ExperimentResult& result, std::ostream& os);
void emit_csv(const ExperimentResult& result, const std::filesystem::path& path);

ExperimentResult read_csv(std::istream& is);
ExperimentResult load_csv(const std::filesystem::path& path);

/// Static SVG: seed-averaged excess MSE (regression methods) or 0-1 loss
/// (classification) against epsilon, log-scale y, one polyline per method.
void write_plot(const ExperimentResult& result, std::ostream& os);
void emit_plot(const ExperimentResult& result, const std::filesystem::path& path);

}  // namespace dpfedrep
