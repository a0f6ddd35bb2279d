#pragma once

#include "pour/bounds.hpp"
#include "pour/checkpoint.hpp"
#include "pour/unlearn.hpp"

#include "json.hpp"

#include <filesystem>
#include <set>
#include <string>

namespace pour {

enum class ModelKind { mlp, nc_oracle };
enum class ReportFormat { csv, json };

/// Everything one pipeline run needs. JSON keys mirror the field names; the
/// top-level geometry keys are "C" and "d".
struct ExperimentConfig {
  // geometry
  int class_count = 4;
  int ambient_dim = 3;
  // generation
  double sigma = 0.05;
  int samples_per_class = 200;
  int test_samples_per_class = 200;
  std::uint64_t seed = 0;
  // model
  ModelKind model_kind = ModelKind::mlp;
  int hidden = 32;
  int feature_dim = 0;  // 0 resolves to C-1 (mlp) or d (nc_oracle)
  double head_scale = 1.0;
  TrainConfig train = [] {
    TrainConfig t;
    t.steps = 1500;
    t.step_size = 0.1;
    return t;
  }();
  // unlearning
  UnlearnConfig unlearn;
  // metric toggles
  bool rus_o = true;
  bool rus_r = false;
  bool rmia = true;
  bool bounds = false;
  bool angles = true;
  bool cka_after_projection = false;
  bool cka_whole_distribution = false;
  int rmia_folds = 5;
  // bound check
  int bound_trials = 20;
  int bound_samples_per_component = 100;
  Kernel bound_kernel = Kernel::gaussian();
  // outputs
  std::string output_dir = "out";
  ReportFormat format = ReportFormat::csv;

  int resolved_feature_dim() const {
    if (feature_dim > 0) return feature_dim;
    return model_kind == ModelKind::nc_oracle ? ambient_dim : class_count - 1;
  }
};

namespace detail {

template <typename E>
E parse_enum(const nlohmann::json& j, std::string_view key,
             std::initializer_list<std::pair<std::string_view, E>> options) {
  const auto text = j.get<std::string>();
  for (const auto& [name, value] : options)
    if (text == name) return value;
  throw Error(ErrorKind::config, "unknown value '" + text + "' for " + std::string(key));
}

inline void reject_unknown(const nlohmann::json& obj, std::string_view where,
                           std::initializer_list<std::string_view> allowed) {
  if (!obj.is_object()) throw Error(ErrorKind::config, std::string(where) + " must be an object");
  std::set<std::string_view> known(allowed);
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!known.contains(it.key()))
      throw Error(ErrorKind::config, "unknown key '" + it.key() + "' in " + std::string(where));
}

inline std::string_view to_string(Optimizer o) {
  return o == Optimizer::momentum ? "momentum" : "gradient_descent";
}

inline nlohmann::json train_to_json(const TrainConfig& t) {
  return {{"steps", t.steps},         {"step_size", t.step_size},       {"batch_size", t.batch_size},
          {"seed", t.seed},           {"optimizer", to_string(t.optimizer)}, {"momentum", t.momentum},
          {"weight_decay", t.weight_decay}};
}

inline TrainConfig train_from_json(const nlohmann::json& j, TrainConfig t, std::string_view where) {
  reject_unknown(j, where, {"steps", "step_size", "batch_size", "seed", "optimizer", "momentum", "weight_decay"});
  if (j.contains("steps")) t.steps = j.at("steps").get<int>();
  if (j.contains("step_size")) t.step_size = j.at("step_size").get<double>();
  if (j.contains("batch_size")) t.batch_size = j.at("batch_size").get<int>();
  if (j.contains("seed")) t.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("optimizer"))
    t.optimizer = parse_enum<Optimizer>(j.at("optimizer"), "optimizer",
                                        {{"gradient_descent", Optimizer::gradient_descent},
                                         {"momentum", Optimizer::momentum}});
  if (j.contains("momentum")) t.momentum = j.at("momentum").get<double>();
  if (j.contains("weight_decay")) t.weight_decay = j.at("weight_decay").get<double>();
  return t;
}

inline std::size_t line_of(std::string_view text, std::size_t byte) {
  std::size_t line = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) line += text[i] == '\n';
  return line;
}

}  // namespace detail

/// Canonical JSON form with every default resolved. Keys are sorted
/// (nlohmann::json objects are ordered maps), so dumps are stable.
inline nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["C"] = c.class_count;
  j["d"] = c.ambient_dim;
  j["sigma"] = c.sigma;
  j["samples_per_class"] = c.samples_per_class;
  j["test_samples_per_class"] = c.test_samples_per_class;
  j["seed"] = c.seed;
  j["model"] = {{"kind", c.model_kind == ModelKind::mlp ? "mlp" : "nc_oracle"},
                {"hidden", c.hidden},
                {"feature_dim", c.resolved_feature_dim()},
                {"head_scale", c.head_scale}};
  j["train"] = detail::train_to_json(c.train);
  j["unlearn"] = {{"variant", to_string(c.unlearn.variant)},
                  {"forget_class", c.unlearn.forget_class},
                  {"direction_source", to_string(c.unlearn.direction_source)},
                  {"pour_d", detail::train_to_json(c.unlearn.pour_d_train)},
                  {"baseline", detail::train_to_json(c.unlearn.baseline_train)},
                  {"ascent_clip", c.unlearn.ascent_clip},
                  {"snapshot_every", c.unlearn.snapshot_every}};
  j["metrics"] = {{"rus_o", c.rus_o},
                  {"rus_r", c.rus_r},
                  {"rmia", c.rmia},
                  {"bounds", c.bounds},
                  {"angles", c.angles},
                  {"cka_after_projection", c.cka_after_projection},
                  {"cka_whole_distribution", c.cka_whole_distribution},
                  {"rmia_folds", c.rmia_folds}};
  nlohmann::json kernel = {{"kind", c.bound_kernel.kind == KernelKind::linear ? "linear" : "gaussian"}};
  kernel["bandwidth"] = c.bound_kernel.bandwidth ? nlohmann::json(*c.bound_kernel.bandwidth) : nlohmann::json();
  j["bounds"] = {{"trials", c.bound_trials},
                 {"samples_per_component", c.bound_samples_per_component},
                 {"kernel", kernel}};
  j["output"] = {{"dir", c.output_dir}, {"format", c.format == ReportFormat::csv ? "csv" : "json"}};
  return j;
}

/// Revalidates every cross-field constraint.
inline void validate(const ExperimentConfig& c) {
  const auto fail = [](const std::string& what) { throw Error(ErrorKind::config, what); };
  if (c.class_count < 2) fail("C must be >= 2");
  if (c.ambient_dim < c.class_count - 1) fail("ambient_dim below C-1");
  if (!(c.sigma >= 0.0)) fail("sigma must be >= 0");
  if (c.samples_per_class < 1 || c.test_samples_per_class < 1) fail("samples_per_class must be >= 1");
  if (c.hidden < 1) fail("model.hidden must be >= 1");
  if (c.resolved_feature_dim() < 1) fail("model.feature_dim must be >= 1");
  if (c.model_kind == ModelKind::nc_oracle && c.feature_dim > 0 && c.feature_dim != c.ambient_dim)
    fail("nc_oracle models use feature_dim == d");
  if (!(c.head_scale > 0.0)) fail("model.head_scale must be > 0");
  if (c.unlearn.forget_class < 0 || c.unlearn.forget_class >= c.class_count) fail("forget_class must be < C");
  if ((c.unlearn.variant == Variant::pour_p || c.unlearn.variant == Variant::pour_d) && c.class_count < 3)
    fail("projection unlearning needs C >= 3");
  if (!(c.unlearn.ascent_clip > 0.0)) fail("ascent_clip must be > 0");
  if (c.unlearn.snapshot_every < 0) fail("snapshot_every must be >= 0");
  if (c.rmia_folds < 2) fail("rmia_folds must be >= 2");
  if (c.rmia && (c.samples_per_class < c.rmia_folds || c.test_samples_per_class < c.rmia_folds))
    fail("rMIA needs at least rmia_folds samples per class in each split");
  if (c.bound_trials < 1) fail("bounds.trials must be >= 1");
  if (c.bound_samples_per_component < 100) fail("bounds.samples_per_component must be >= 100");
  if (c.bound_kernel.bandwidth && !(*c.bound_kernel.bandwidth > 0.0)) fail("bounds.kernel.bandwidth must be > 0");
  try {
    c.train.validate();
    c.unlearn.pour_d_train.validate();
    c.unlearn.baseline_train.validate();
  } catch (const Error& e) {
    fail(e.what());
  }
}

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  using detail::reject_unknown;
  reject_unknown(j, "config", {"C", "d", "sigma", "samples_per_class", "test_samples_per_class", "seed",
                               "model", "train", "unlearn", "metrics", "bounds", "output"});
  ExperimentConfig c;
  try {
    if (!j.contains("C") || !j.contains("d")) throw Error(ErrorKind::config, "config needs C and d");
    c.class_count = j.at("C").get<int>();
    c.ambient_dim = j.at("d").get<int>();
    if (j.contains("sigma")) c.sigma = j.at("sigma").get<double>();
    if (j.contains("samples_per_class")) c.samples_per_class = j.at("samples_per_class").get<int>();
    c.test_samples_per_class = j.value("test_samples_per_class", c.samples_per_class);
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("model")) {
      const auto& m = j.at("model");
      reject_unknown(m, "model", {"kind", "hidden", "feature_dim", "head_scale"});
      if (m.contains("kind"))
        c.model_kind = detail::parse_enum<ModelKind>(m.at("kind"), "model.kind",
                                                     {{"mlp", ModelKind::mlp}, {"nc_oracle", ModelKind::nc_oracle}});
      c.hidden = m.value("hidden", c.hidden);
      c.feature_dim = m.value("feature_dim", c.feature_dim);
      c.head_scale = m.value("head_scale", c.head_scale);
    }
    if (j.contains("train")) c.train = detail::train_from_json(j.at("train"), c.train, "train");
    if (j.contains("unlearn")) {
      const auto& u = j.at("unlearn");
      reject_unknown(u, "unlearn", {"variant", "forget_class", "direction_source", "pour_d", "baseline",
                                    "ascent_clip", "snapshot_every"});
      if (u.contains("variant"))
        c.unlearn.variant = detail::parse_enum<Variant>(
            u.at("variant"), "unlearn.variant",
            {{"pour_p", Variant::pour_p}, {"pour_d", Variant::pour_d},
             {"random_label", Variant::random_label}, {"gradient_ascent", Variant::gradient_ascent}});
      c.unlearn.forget_class = u.value("forget_class", c.unlearn.forget_class);
      if (u.contains("direction_source"))
        c.unlearn.direction_source = detail::parse_enum<DirectionSource>(
            u.at("direction_source"), "unlearn.direction_source",
            {{"head_column", DirectionSource::head_column}, {"empirical_mean", DirectionSource::empirical_mean}});
      if (u.contains("pour_d"))
        c.unlearn.pour_d_train = detail::train_from_json(u.at("pour_d"), c.unlearn.pour_d_train, "unlearn.pour_d");
      if (u.contains("baseline"))
        c.unlearn.baseline_train =
            detail::train_from_json(u.at("baseline"), c.unlearn.baseline_train, "unlearn.baseline");
      c.unlearn.ascent_clip = u.value("ascent_clip", c.unlearn.ascent_clip);
      c.unlearn.snapshot_every = u.value("snapshot_every", c.unlearn.snapshot_every);
    }
    if (j.contains("metrics")) {
      const auto& m = j.at("metrics");
      reject_unknown(m, "metrics", {"rus_o", "rus_r", "rmia", "bounds", "angles", "cka_after_projection",
                                    "cka_whole_distribution", "rmia_folds"});
      c.rus_o = m.value("rus_o", c.rus_o);
      c.rus_r = m.value("rus_r", c.rus_r);
      c.rmia = m.value("rmia", c.rmia);
      c.bounds = m.value("bounds", c.bounds);
      c.angles = m.value("angles", c.angles);
      c.cka_after_projection = m.value("cka_after_projection", c.cka_after_projection);
      c.cka_whole_distribution = m.value("cka_whole_distribution", c.cka_whole_distribution);
      c.rmia_folds = m.value("rmia_folds", c.rmia_folds);
    }
    if (j.contains("bounds")) {
      const auto& b = j.at("bounds");
      reject_unknown(b, "bounds", {"trials", "samples_per_component", "kernel"});
      c.bound_trials = b.value("trials", c.bound_trials);
      c.bound_samples_per_component = b.value("samples_per_component", c.bound_samples_per_component);
      if (b.contains("kernel")) {
        const auto& k = b.at("kernel");
        reject_unknown(k, "bounds.kernel", {"kind", "bandwidth"});
        if (k.contains("kind"))
          c.bound_kernel.kind = detail::parse_enum<KernelKind>(
              k.at("kind"), "bounds.kernel.kind", {{"linear", KernelKind::linear}, {"gaussian", KernelKind::gaussian}});
        if (k.contains("bandwidth") && !k.at("bandwidth").is_null())
          c.bound_kernel.bandwidth = k.at("bandwidth").get<double>();
      }
    }
    if (j.contains("output")) {
      const auto& o = j.at("output");
      reject_unknown(o, "output", {"dir", "format"});
      c.output_dir = o.value("dir", c.output_dir);
      if (o.contains("format"))
        c.format = detail::parse_enum<ReportFormat>(o.at("format"), "output.format",
                                                    {{"csv", ReportFormat::csv}, {"json", ReportFormat::json}});
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::config, std::string("wrong value type: ") + e.what());
  }
  if (c.feature_dim == 0) c.feature_dim = c.resolved_feature_dim();
  validate(c);
  return c;
}

inline ExperimentConfig parse_config(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::parse, "line " + std::to_string(detail::line_of(text, e.byte)) + ": " + e.what());
  }
  return config_from_json(j);
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  return parse_config(detail::read_file(path));
}

/// Hex digest of the canonical config. Output locations are excluded so a
/// run hashes the same wherever it writes.
inline std::string config_hash(const ExperimentConfig& c) {
  nlohmann::json j = to_json(c);
  j.erase("output");
  return to_hex(fnv1a64(j.dump()));
}

}  // namespace pour
