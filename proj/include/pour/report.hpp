#pragma once

#include "pour/config.hpp"

#include <array>
#include <cstdio>
#include <string>
#include <vector>

namespace pour {

inline constexpr std::string_view artifact_version = "1.0.0";

struct RunManifest {
  std::string config_hash;
  std::string version = std::string(artifact_version);
  std::string variant;
  std::uint64_t seed = 0;
  double duration_s = 0.0;
  MetricsReport metrics;
  std::vector<BoundTriple> bounds;
  std::vector<double> losses;
  std::optional<AngleStats> angles;
  std::optional<double> head_gram_residual;
  std::optional<UniformityStats> uniformity;
  std::optional<AlphaSweep> alpha;
  std::optional<double> cka_whole_o;
  std::size_t retained_rows_seen_by_unlearn = 0;
  std::vector<std::string> notes;
};

inline constexpr std::array<std::string_view, 14> report_columns = {
    "variant", "seed",    "acc_r",   "acc_f", "acc_tr",  "acc_tf",  "aus",
    "rmia",    "cka_f_o", "cka_r_o", "rus_o", "cka_f_r", "cka_r_r", "rus_r"};

namespace detail {

inline std::string fixed4(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

inline std::string cell(const std::optional<double>& v) { return v ? fixed4(*v) : "--"; }

inline std::array<std::optional<double>, 12> metric_cells(const MetricsReport& m) {
  return {m.acc_r, m.acc_f, m.acc_tr, m.acc_tf, m.aus, m.rmia,
          m.cka_f_o, m.cka_r_o, m.rus_o, m.cka_f_r, m.cka_r_r, m.rus_r};
}

inline nlohmann::ordered_json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json();
}

}  // namespace detail

/// CSV with one row per manifest. With more than one manifest a final
/// "mean±std" row aggregates each column over the manifests where it is present.
inline std::string render_csv(const std::vector<RunManifest>& manifests) {
  std::string out;
  for (std::size_t i = 0; i < report_columns.size(); ++i) {
    if (i) out += ',';
    out += report_columns[i];
  }
  out += '\n';
  for (const auto& m : manifests) {
    out += m.variant + ',' + std::to_string(m.seed);
    for (const auto& v : detail::metric_cells(m.metrics)) out += ',' + detail::cell(v);
    out += '\n';
  }
  if (manifests.size() > 1) {
    out += "mean±std,--";
    for (std::size_t col = 0; col < 12; ++col) {
      std::vector<double> values;
      for (const auto& m : manifests)
        if (auto v = detail::metric_cells(m.metrics)[col]) values.push_back(*v);
      if (values.empty()) {
        out += ",--";
        continue;
      }
      double mean = 0.0;
      for (double v : values) mean += v;
      mean /= static_cast<double>(values.size());
      double ss = 0.0;
      for (double v : values) ss += (v - mean) * (v - mean);
      const double sd = values.size() > 1 ? std::sqrt(ss / static_cast<double>(values.size() - 1)) : 0.0;
      out += ',' + detail::fixed4(mean) + "±" + detail::fixed4(sd);
    }
    out += '\n';
  }
  return out;
}

inline nlohmann::ordered_json manifest_json(const RunManifest& m, bool include_timing) {
  nlohmann::ordered_json j;
  j["variant"] = m.variant;
  j["seed"] = m.seed;
  j["config_hash"] = m.config_hash;
  j["version"] = m.version;
  if (include_timing) j["duration_s"] = m.duration_s;
  nlohmann::ordered_json metrics;
  const auto cells = detail::metric_cells(m.metrics);
  for (std::size_t i = 0; i < cells.size(); ++i)
    metrics[std::string(report_columns[i + 2])] = detail::optional_json(cells[i]);
  j["metrics"] = metrics;
  nlohmann::ordered_json bounds = nlohmann::ordered_json::array();
  for (const auto& b : m.bounds)
    bounds.push_back({{"lower", b.lower}, {"middle", b.middle}, {"upper", b.upper},
                      {"delta_c", b.delta_c}, {"delta_c_reference", b.delta_c_reference},
                      {"k_u", b.k_u}, {"k_not_u", b.k_not_u}, {"alpha", b.alpha}, {"beta", b.beta},
                      {"estimator_std", b.estimator_std}});
  j["bounds"] = bounds;
  j["losses"] = m.losses;
  if (m.angles) {
    j["angles"] = {{"mean_angle_deg", m.angles->mean_angle_deg},
                   {"ideal_angle_deg", m.angles->ideal_angle_deg},
                   {"per_pair_angles", m.angles->per_pair_angles}};
  }
  j["head_gram_residual"] = detail::optional_json(m.head_gram_residual);
  if (m.uniformity) {
    j["uniformity"] = {{"max_abs_retained_logit", m.uniformity->max_abs_retained_logit},
                       {"max_softmax_deviation", m.uniformity->max_softmax_deviation},
                       {"max_abs_mean_retained_logit", m.uniformity->max_abs_mean_retained_logit},
                       {"mean_logit_tolerance", m.uniformity->mean_logit_tolerance}};
  }
  if (m.alpha) {
    nlohmann::ordered_json pts = nlohmann::ordered_json::array();
    for (const auto& p : m.alpha->points) pts.push_back({{"step", p.step}, {"alpha", p.alpha}, {"k", p.k}});
    j["alpha_sweep"] = {{"points", pts}, {"alpha_non_increasing", m.alpha->alpha_non_increasing}};
  }
  j["cka_whole_o"] = detail::optional_json(m.cka_whole_o);
  j["retained_rows_seen_by_unlearn"] = m.retained_rows_seen_by_unlearn;
  j["notes"] = m.notes;
  return j;
}

/// JSON array of manifests. Wall-clock time is left out unless asked for,
/// so reports of identical runs compare byte-equal.
inline std::string render_json(const std::vector<RunManifest>& manifests, bool include_timing = false) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& m : manifests) arr.push_back(manifest_json(m, include_timing));
  return arr.dump(2) + "\n";
}

inline constexpr std::array<std::string_view, 12> bound_columns = {
    "trial", "alpha", "beta", "lower", "middle", "upper", "delta_c", "delta_c_reference",
    "k_u", "k_not_u", "estimator_std", "sandwiched"};

/// One row per bound trial.
inline std::string render_bounds_csv(const std::vector<BoundTriple>& bounds) {
  std::string out;
  for (std::size_t i = 0; i < bound_columns.size(); ++i) {
    if (i) out += ',';
    out += bound_columns[i];
  }
  out += '\n';
  for (std::size_t t = 0; t < bounds.size(); ++t) {
    const BoundTriple& b = bounds[t];
    out += std::to_string(t);
    for (double v : {b.alpha, b.beta, b.lower, b.middle, b.upper, b.delta_c, b.delta_c_reference, b.k_u,
                     b.k_not_u, b.estimator_std})
      out += ',' + detail::fixed4(v);
    out += b.sandwiched() ? ",1\n" : ",0\n";
  }
  return out;
}

inline void emit_report(const std::vector<RunManifest>& manifests, ReportFormat format,
                        const std::filesystem::path& path) {
  if (manifests.empty()) throw Error(ErrorKind::invalid_argument, "no manifests to report");
  const std::string text = format == ReportFormat::csv ? render_csv(manifests) : render_json(manifests);
  detail::write_file(path, text);
}

}  // namespace pour
