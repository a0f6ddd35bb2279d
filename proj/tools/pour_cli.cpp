#include "pour/pour.hpp"

#include "CLI11.hpp"

#include <iostream>

namespace fs = std::filesystem;
using namespace pour;

namespace {

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> format;
  int runs = 1;
};

ExperimentConfig resolve(const Options& o) {
  ExperimentConfig c = o.config_path.empty() ? ExperimentConfig{} : load_config(o.config_path);
  if (o.seed) c.seed = *o.seed;
  if (o.out) c.output_dir = *o.out;
  if (o.format) {
    if (*o.format == "csv") c.format = ReportFormat::csv;
    else if (*o.format == "json") c.format = ReportFormat::json;
    else throw Error(ErrorKind::config, "unknown format '" + *o.format + "'");
  }
  validate(c);
  return c;
}

std::string extension(ReportFormat f) { return f == ReportFormat::csv ? ".csv" : ".json"; }

fs::path out_path(const ExperimentConfig& c, const std::string& name) { return fs::path(c.output_dir) / name; }

Datasets load_datasets(const ExperimentConfig& c) {
  return {load_frame(out_path(c, "frame.pour"), c.class_count),
          load_features(out_path(c, "train.pour"), c.class_count),
          load_features(out_path(c, "test.pour"), c.class_count)};
}

void save_datasets(const ExperimentConfig& c, const Datasets& d) {
  save_checkpoint(d.frame, out_path(c, "frame.pour"));
  save_checkpoint(d.train, out_path(c, "train.pour"));
  save_checkpoint(d.test, out_path(c, "test.pour"));
}

int cmd_gen(const ExperimentConfig& c) {
  save_datasets(c, generate_data(c));
  std::cout << "wrote " << out_path(c, "{frame,train,test}.pour").string() << "\n";
  return 0;
}

int cmd_train(const ExperimentConfig& c) {
  const Datasets d = load_datasets(c);
  save_checkpoint(build_original(c, d), out_path(c, "original.pour"));
  std::cout << "wrote " << out_path(c, "original.pour").string() << "\n";
  return 0;
}

int cmd_unlearn(const ExperimentConfig& c) {
  const FeatureMatrix train = load_features(out_path(c, "train.pour"), c.class_count);
  const ToyModel original = load_model(out_path(c, "original.pour"), c.class_count);
  const FeatureMatrix forget = split_forget_retain(train, c.unlearn.forget_class).first;
  UnlearnConfig u = c.unlearn;
  u.pour_d_train.seed = Rng::derive(c.seed, 8);
  u.baseline_train.seed = Rng::derive(c.seed, 9);
  const UnlearnResult r = unlearn(original, u, forget);
  save_checkpoint(r.model, out_path(c, "unlearned.pour"));
  std::cout << "wrote " << out_path(c, "unlearned.pour").string() << "\n";
  return 0;
}

int cmd_eval(const ExperimentConfig& c) {
  const Datasets d = load_datasets(c);
  const ToyModel original = load_model(out_path(c, "original.pour"), c.class_count);
  UnlearnResult r;
  r.model = load_model(out_path(c, "unlearned.pour"), c.class_count);
  r.projector = r.model.projection;
  std::optional<ToyModel> reference;
  if (c.rus_r) reference = build_reference(c, split_forget_retain(d.train, c.unlearn.forget_class).second);
  const RunManifest m = evaluate(c, d, original, r, reference);
  const fs::path path = out_path(c, "report" + extension(c.format));
  emit_report({m}, c.format, path);
  std::cout << "wrote " << path.string() << "\n";
  return 0;
}

int cmd_bound_check(const ExperimentConfig& c) {
  const std::vector<BoundTriple> bounds = bound_trials(c);
  const fs::path path = out_path(c, "bounds" + extension(c.format));
  if (c.format == ReportFormat::csv) {
    detail::write_file(path, render_bounds_csv(bounds));
  } else {
    RunManifest m;
    m.config_hash = config_hash(c);
    m.variant = "bound_check";
    m.seed = c.seed;
    m.bounds = bounds;
    detail::write_file(path, render_json({m}));
  }
  std::size_t held = 0, ordered = 0;
  for (const auto& b : bounds) {
    held += b.sandwiched();
    ordered += b.ordered();
  }
  std::cout << "sandwiched " << held << "/" << bounds.size() << ", ordered " << ordered << "/" << bounds.size()
            << "; wrote " << path.string() << "\n";
  return 0;
}

int cmd_run(const ExperimentConfig& c, int runs) {
  std::vector<RunOutput> outputs = run_sweep(c, runs);
  std::vector<RunManifest> manifests;
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    const RunOutput& o = outputs[i];
    ExperimentConfig ci = c;
    if (runs > 1) ci.output_dir = (fs::path(c.output_dir) / ("seed_" + std::to_string(o.manifest.seed))).string();
    save_datasets(ci, o.data);
    save_checkpoint(o.original, out_path(ci, "original.pour"));
    save_checkpoint(o.unlearned.model, out_path(ci, "unlearned.pour"));
    manifests.push_back(o.manifest);
  }
  const fs::path path = out_path(c, "report" + extension(c.format));
  emit_report(manifests, c.format, path);
  std::cout << render_csv(manifests);
  std::cout << "wrote " << path.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Projection-based class unlearning on synthetic neural-collapse data"};
  app.require_subcommand(1);
  Options opt;

  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config_path, "JSON experiment config");
    sub->add_option("--seed", opt.seed, "override config seed");
    sub->add_option("--out", opt.out, "override output directory");
    sub->add_option("--format", opt.format, "report format: csv or json");
  };
  CLI::App* gen = app.add_subcommand("gen", "generate frame and train/test features");
  CLI::App* train = app.add_subcommand("train", "train the original model on the generated data");
  CLI::App* unl = app.add_subcommand("unlearn", "unlearn the forget class using forget rows only");
  CLI::App* eval = app.add_subcommand("eval", "compute metrics for saved models");
  CLI::App* bound = app.add_subcommand("bound-check", "randomized decomposition-bound trials");
  CLI::App* run = app.add_subcommand("run", "full pipeline");
  for (CLI::App* sub : {gen, train, unl, eval, bound, run}) add_common(sub);
  run->add_option("--runs", opt.runs, "independent runs with seeds seed, seed+1, ...")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    const ExperimentConfig c = resolve(opt);
    if (*gen) return cmd_gen(c);
    if (*train) return cmd_train(c);
    if (*unl) return cmd_unlearn(c);
    if (*eval) return cmd_eval(c);
    if (*bound) return cmd_bound_check(c);
    return cmd_run(c, opt.runs);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
