#pragma once

#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "tmvi/core.hpp"
#include "tmvi/oracle.hpp"

namespace tmvi {

inline nlohmann::json counts_to_json(const OracleCallCounts& c) {
  return {{"F", c.f}, {"JF", c.jf}, {"G_VALUE", c.g_value}};
}

inline nlohmann::json record_to_json(const IterationRecord& rec) {
  nlohmann::json j;
  j["phase"] = to_string(rec.phase);
  j["restart"] = rec.restart_index;
  j["iter"] = rec.iter;
  j["gamma"] = rec.gamma;
  j["f_norm"] = rec.f_norm;
  if (rec.dist_to_ref)
    j["dist_to_ref"] = *rec.dist_to_ref;
  else
    j["dist_to_ref"] = nullptr;
  j["calls"] = counts_to_json(rec.oracle_calls_cumulative);
  return j;
}

/// One JSON object per line. `record_every` thins the stream; the final
/// record is always written.
inline void write_trace_jsonl(const RunTrace& trace, const std::string& path,
                              int record_every = 1) {
  require(record_every >= 1, "write_trace_jsonl: record_every must be >= 1");
  std::ofstream out(path);
  require(out.good(), "write_trace_jsonl: cannot open " + path);
  const std::size_t count = trace.records.size();
  for (std::size_t i = 0; i < count; ++i) {
    if (i % static_cast<std::size_t>(record_every) != 0 && i + 1 != count)
      continue;
    out << record_to_json(trace.records[i]).dump() << "\n";
  }
}

/// Fixed column order: phase,restart,iter,gamma,f_norm,dist_to_ref,calls_F,
/// calls_JF. An absent dist_to_ref is an empty field.
inline void write_trace_csv(const RunTrace& trace, const std::string& path,
                            int record_every = 1) {
  require(record_every >= 1, "write_trace_csv: record_every must be >= 1");
  std::ofstream out(path);
  require(out.good(), "write_trace_csv: cannot open " + path);
  out << "phase,restart,iter,gamma,f_norm,dist_to_ref,calls_F,calls_JF\n";
  char buf[64];
  auto fmt = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };
  const std::size_t count = trace.records.size();
  for (std::size_t i = 0; i < count; ++i) {
    if (i % static_cast<std::size_t>(record_every) != 0 && i + 1 != count)
      continue;
    const auto& r = trace.records[i];
    out << to_string(r.phase) << ',' << r.restart_index << ',' << r.iter << ','
        << fmt(r.gamma) << ',' << fmt(r.f_norm) << ','
        << (r.dist_to_ref ? fmt(*r.dist_to_ref) : std::string()) << ','
        << r.oracle_calls_cumulative.f << ',' << r.oracle_calls_cumulative.jf
        << "\n";
  }
}

struct PhaseIterationCounts {
  int homp = 0;
  int crn = 0;
  int tensor = 0;
};

inline PhaseIterationCounts count_phase_iterations(const RunTrace& trace) {
  PhaseIterationCounts counts;
  for (const auto& r : trace.records) {
    switch (r.phase) {
      case Phase::Homp: ++counts.homp; break;
      case Phase::Crn: ++counts.crn; break;
      case Phase::TensorStep: ++counts.tensor; break;
    }
  }
  return counts;
}

/// Single-document run summary. Gap/merit fields are recomputed from the
/// final point so downstream checks can reproduce them exactly.
inline nlohmann::json make_summary(const SaddleOracle& oracle,
                                   const RunTrace& trace,
                                   const std::string& algorithm,
                                   const std::string& instance_label) {
  nlohmann::json j;
  j["algorithm"] = algorithm;
  j["instance"] = instance_label;
  j["status"] = to_string(trace.status);
  PhaseIterationCounts iters = count_phase_iterations(trace);
  j["iterations"] = {
      {"homp", iters.homp}, {"crn", iters.crn}, {"tensor", iters.tensor}};
  j["oracle_calls"] = counts_to_json(trace.counts);

  const PointZ& z = trace.final_point;
  j["final_point"] = {{"x", std::vector<double>(z.x.data(), z.x.data() + z.x.size())},
                      {"y", std::vector<double>(z.y.data(), z.y.data() + z.y.size())}};
  PointZ f = operator_f(oracle, z);
  j["final_f_norm"] = norm_z(f);
  j["final_merit"] = merit_of(f);
  std::optional<double> gap = oracle.exact_duality_gap(z);
  if (gap)
    j["duality_gap"] = *gap;
  else
    j["duality_gap"] = nullptr;
  return j;
}

}  // namespace tmvi
