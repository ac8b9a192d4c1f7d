#pragma once

#include <string>
#include <tuple>
#include <vector>

#include "bb/model.hpp"
#include "bb/training.hpp"

namespace bb {

/// Writes via a temp file in the same directory plus rename, so readers never
/// observe a half-written report.
void write_file_atomic(const std::string& path, const std::string& content);

/// JSON summary of a (possibly trained) model: architecture, per-quantizer
/// bit widths / prune ratios / ranges, per-layer and total BOPs, and the
/// training history when one exists. Keys are emitted sorted, so the output
/// is byte-stable for identical inputs.
std::string architecture_report(const Model& model, const TrainResult* result,
                                const std::map<std::string, double>& config_echo);

/// CSV "mu,accuracy,relative_bops" for a regularizer-strength sweep.
std::string pareto_csv(const std::vector<std::tuple<double, double, double>>& rows);

/// CSV "config,accuracy,relative_bops" for sensitivity-baseline points; the
/// config column spells out each quantizer's forced bit width.
std::string baseline_csv(const std::vector<BaselinePoint>& points);

}  // namespace bb
