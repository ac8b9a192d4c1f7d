#include "bb/report.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace bb {

void write_file_atomic(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw std::runtime_error("short write to " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw std::runtime_error("cannot rename " + tmp + " to " + path);
}

std::string architecture_report(const Model& model, const TrainResult* result,
                                const std::map<std::string, double>& config_echo) {
  using nlohmann::json;
  json j;
  j["arch"] = json::parse(arch_to_json(model.arch()));
  j["config"] = config_echo;

  const BopTotals totals = model.bops();
  json layers = json::object();
  for (std::size_t i = 0; i < model.cost().layers.size(); ++i) {
    const LayerCost& lc = model.cost().layers[i];
    json lj;
    lj["macs"] = mac_count(lc);
    lj["bops"] = totals.per_layer[i];
    lj["weight_quantizer"] = lc.weight_q;
    lj["input_quantizer"] = lc.input_q;
    layers[lc.id] = lj;
  }
  j["layers"] = layers;

  json quants = json::object();
  for (const auto& q : model.quantizers()) {
    const EffectiveBits eb = effective_bitwidth(q);
    json qj;
    qj["bits"] = eb.bits;
    qj["prune_ratio"] = eb.prune_ratio;
    qj["range"] = q.beta;
    qj["signed"] = q.is_signed;
    qj["lambda"] = q.lambda;
    quants[q.id] = qj;
  }
  j["quantizers"] = quants;

  j["bops_total"] = totals.absolute;
  j["bops_relative_percent"] = totals.relative_percent;

  if (result) {
    j["accuracy"] = result->final_accuracy;
    json hist = json::array();
    for (const auto& rec : result->history) {
      json hj;
      hj["epoch"] = rec.epoch;
      hj["train_loss"] = rec.train_loss;
      hj["eval_accuracy"] = rec.eval_accuracy;
      hj["relative_bops"] = rec.relative_bops;
      hist.push_back(hj);
    }
    j["history"] = hist;
  }
  return j.dump(2) + "\n";
}

std::string pareto_csv(const std::vector<std::tuple<double, double, double>>& rows) {
  std::ostringstream out;
  out << "mu,accuracy,relative_bops\n";
  char buf[128];
  for (const auto& [mu, acc, bops] : rows) {
    std::snprintf(buf, sizeof(buf), "%.10g,%.6f,%.6f\n", mu, acc, bops);
    out << buf;
  }
  return out.str();
}

std::string baseline_csv(const std::vector<BaselinePoint>& points) {
  std::ostringstream out;
  out << "config,accuracy,relative_bops\n";
  char buf[64];
  for (const auto& p : points) {
    bool first = true;
    for (const auto& [id, bits] : p.bits) {
      out << (first ? "" : " ") << id << "=" << bits;
      first = false;
    }
    std::snprintf(buf, sizeof(buf), ",%.6f,%.6f\n", p.accuracy, p.relative_bops);
    out << buf;
  }
  return out.str();
}

}  // namespace bb
