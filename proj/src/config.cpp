#include "latentflow/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace latentflow {

namespace {

using nlohmann::ordered_json;

[[noreturn]] void fail(const std::string& path, const std::string& msg) {
  throw ConfigError("config error at " + path + ": " + msg);
}

void check_keys(const ordered_json& j, const std::string& path, std::set<std::string> allowed) {
  for (const auto& [key, value] : j.items()) {
    if (!allowed.contains(key)) fail(path.empty() ? key : path + "." + key, "unknown field");
  }
}

template <class T>
T get_field(const ordered_json& j, const std::string& path, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const std::exception&) {
    fail(path.empty() ? key : path + "." + std::string(key), "wrong type");
  }
}

std::string get_string_field(const ordered_json& j, const std::string& path, const char* key,
                             const std::string& fallback) {
  return get_field<std::string>(j, path, key, fallback);
}

void parse_adam(const ordered_json& j, const std::string& path, AdamConfig& adam) {
  adam.lr = get_field(j, path, "lr", adam.lr);
  adam.beta1 = get_field(j, path, "beta1", adam.beta1);
  adam.beta2 = get_field(j, path, "beta2", adam.beta2);
  adam.eps = get_field(j, path, "eps", adam.eps);
}

}  // namespace

ExperimentConfig ExperimentConfig::defaults_gaussians2d() {
  ExperimentConfig cfg;
  cfg.experiment = "gaussians2d";
  cfg.flow.latent_dim = 2;
  cfg.flow.scheme = ConditioningScheme::raw_append;
  cfg.flow.hidden = 64;
  cfg.flow.n_hidden_layers = 3;  // four linear layers
  cfg.flow.act = Activation::elu;
  cfg.flow.n_classes = 4;
  cfg.flow.n_continuous = 0;
  cfg.flow_train.dropout_p = 0.2;
  cfg.flow_train.batch_size = 256;
  cfg.flow_train.steps = 8000;
  return cfg;
}

ExperimentConfig ExperimentConfig::defaults_factors() {
  ExperimentConfig cfg;
  cfg.experiment = "factors";
  cfg.vae.input_dim = cfg.factor.observation_dim;
  cfg.vae.latent_dim = 16;
  cfg.vae.hidden = 128;
  cfg.vae.epochs = 60;
  cfg.vae.batch_size = 128;
  cfg.flow.latent_dim = 16;
  cfg.flow.scheme = ConditioningScheme::film;
  cfg.flow.hidden = 128;
  cfg.flow.n_hidden_layers = 4;
  cfg.flow.act = Activation::gelu;
  cfg.flow.n_classes = cfg.factor.n_classes;
  cfg.flow.n_continuous = 2;  // (r, g); b is withheld
  cfg.flow.embed_dim = 8;
  cfg.flow_train.dropout_p = 0.1;
  cfg.flow_train.batch_size = 128;
  cfg.flow_train.steps = 6000;
  return cfg;
}

ExperimentConfig ExperimentConfig::from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config error: cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_json_text(ss.str(), path);
}

ExperimentConfig ExperimentConfig::from_json_text(const std::string& text,
                                                  const std::string& source) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const std::exception& e) {
    throw ConfigError("config error: " + source + " is not valid JSON: " + e.what());
  }
  if (!j.is_object()) throw ConfigError("config error: " + source + ": top level must be an object");

  check_keys(j, "", {"experiment", "seed", "out_dir", "train_fraction", "smoke", "dataset",
                     "vae", "flow", "integrator", "analysis"});

  const std::string experiment = get_string_field(j, "", "experiment", "");
  ExperimentConfig cfg;
  if (experiment == "gaussians2d") {
    cfg = defaults_gaussians2d();
  } else if (experiment == "factors") {
    cfg = defaults_factors();
  } else {
    fail("experiment", "must be \"gaussians2d\" or \"factors\", got \"" + experiment + "\"");
  }

  cfg.seed = get_field<std::uint64_t>(j, "", "seed", cfg.seed);
  cfg.smoke = get_field(j, "", "smoke", cfg.smoke);
  cfg.out_dir = get_string_field(j, "", "out_dir", cfg.out_dir);
  cfg.train_fraction = get_field(j, "", "train_fraction", cfg.train_fraction);

  if (j.contains("dataset")) {
    const auto& d = j.at("dataset");
    if (!d.is_object()) fail("dataset", "must be an object");
    if (cfg.experiment == "gaussians2d") {
      check_keys(d, "dataset", {"n_samples", "covariance_scale"});
      cfg.gaussian.n_samples = get_field(d, "dataset", "n_samples", cfg.gaussian.n_samples);
      cfg.gaussian.covariance_scale =
          get_field(d, "dataset", "covariance_scale", cfg.gaussian.covariance_scale);
    } else {
      check_keys(d, "dataset",
                 {"n_samples", "n_classes", "rgb_low", "rgb_high", "observation_dim",
                  "mixing_seed", "noise_scale"});
      cfg.factor.n_samples = get_field(d, "dataset", "n_samples", cfg.factor.n_samples);
      cfg.factor.n_classes = get_field(d, "dataset", "n_classes", cfg.factor.n_classes);
      cfg.factor.rgb_low = get_field(d, "dataset", "rgb_low", cfg.factor.rgb_low);
      cfg.factor.rgb_high = get_field(d, "dataset", "rgb_high", cfg.factor.rgb_high);
      cfg.factor.observation_dim =
          get_field(d, "dataset", "observation_dim", cfg.factor.observation_dim);
      cfg.factor.mixing_seed = get_field(d, "dataset", "mixing_seed", cfg.factor.mixing_seed);
      cfg.factor.noise_scale = get_field(d, "dataset", "noise_scale", cfg.factor.noise_scale);
      cfg.vae.input_dim = cfg.factor.observation_dim;
      cfg.flow.n_classes = cfg.factor.n_classes;
    }
  }

  if (j.contains("vae")) {
    const auto& v = j.at("vae");
    if (!v.is_object()) fail("vae", "must be an object");
    check_keys(v, "vae",
               {"latent_dim", "hidden", "n_hidden_layers", "beta", "epochs", "batch_size", "lr",
                "beta1", "beta2", "eps"});
    cfg.vae.latent_dim = get_field(v, "vae", "latent_dim", cfg.vae.latent_dim);
    cfg.vae.hidden = get_field(v, "vae", "hidden", cfg.vae.hidden);
    cfg.vae.n_hidden_layers = get_field(v, "vae", "n_hidden_layers", cfg.vae.n_hidden_layers);
    cfg.vae.beta = get_field(v, "vae", "beta", cfg.vae.beta);
    cfg.vae.epochs = get_field(v, "vae", "epochs", cfg.vae.epochs);
    cfg.vae.batch_size = get_field(v, "vae", "batch_size", cfg.vae.batch_size);
    parse_adam(v, "vae", cfg.vae.adam);
    cfg.flow.latent_dim = cfg.vae.latent_dim;
  }

  if (j.contains("flow")) {
    const auto& f = j.at("flow");
    if (!f.is_object()) fail("flow", "must be an object");
    check_keys(f, "flow",
               {"scheme", "hidden", "n_hidden_layers", "activation", "embed_dim",
                "time_embedding", "dropout_p", "batch_size", "steps", "lr", "beta1", "beta2",
                "eps"});
    if (f.contains("scheme")) {
      try {
        cfg.flow.scheme = scheme_from_name(f.at("scheme").get<std::string>());
      } catch (const std::exception& e) {
        fail("flow.scheme", e.what());
      }
    }
    cfg.flow.hidden = get_field(f, "flow", "hidden", cfg.flow.hidden);
    cfg.flow.n_hidden_layers = get_field(f, "flow", "n_hidden_layers", cfg.flow.n_hidden_layers);
    if (f.contains("activation")) {
      try {
        cfg.flow.act = activation_from_name(f.at("activation").get<std::string>());
      } catch (const std::exception& e) {
        fail("flow.activation", e.what());
      }
    }
    cfg.flow.embed_dim = get_field(f, "flow", "embed_dim", cfg.flow.embed_dim);
    if (f.contains("time_embedding")) {
      try {
        cfg.flow.time_embedding =
            time_embedding_from_name(f.at("time_embedding").get<std::string>());
      } catch (const std::exception& e) {
        fail("flow.time_embedding", e.what());
      }
    }
    cfg.flow_train.dropout_p = get_field(f, "flow", "dropout_p", cfg.flow_train.dropout_p);
    cfg.flow_train.batch_size = get_field(f, "flow", "batch_size", cfg.flow_train.batch_size);
    cfg.flow_train.steps = get_field(f, "flow", "steps", cfg.flow_train.steps);
    parse_adam(f, "flow", cfg.flow_train.adam);
  }

  if (j.contains("integrator")) {
    const auto& i = j.at("integrator");
    if (!i.is_object()) fail("integrator", "must be an object");
    check_keys(i, "integrator", {"method", "n_steps"});
    if (i.contains("method")) {
      try {
        cfg.integrator.method = ode_method_from_name(i.at("method").get<std::string>());
      } catch (const std::exception& e) {
        fail("integrator.method", e.what());
      }
    }
    cfg.integrator.n_steps = get_field(i, "integrator", "n_steps", cfg.integrator.n_steps);
  }

  if (j.contains("analysis")) {
    const auto& a = j.at("analysis");
    if (!a.is_object()) fail("analysis", "must be an object");
    check_keys(a, "analysis",
               {"probe_points", "n_train", "n_repeats", "ridge_lambda", "n_probe_samples",
                "n_transfer", "n_isolate", "isolate_reference_class", "n_roundtrip",
                "roundtrip_steps", "n_generate_per_class"});
    auto& an = cfg.analysis;
    an.probe_points = get_field(a, "analysis", "probe_points", an.probe_points);
    an.n_train = get_field(a, "analysis", "n_train", an.n_train);
    an.n_repeats = get_field(a, "analysis", "n_repeats", an.n_repeats);
    an.ridge_lambda = get_field(a, "analysis", "ridge_lambda", an.ridge_lambda);
    an.n_probe_samples = get_field(a, "analysis", "n_probe_samples", an.n_probe_samples);
    an.n_transfer = get_field(a, "analysis", "n_transfer", an.n_transfer);
    an.n_isolate = get_field(a, "analysis", "n_isolate", an.n_isolate);
    an.isolate_reference_class =
        get_field(a, "analysis", "isolate_reference_class", an.isolate_reference_class);
    an.n_roundtrip = get_field(a, "analysis", "n_roundtrip", an.n_roundtrip);
    an.roundtrip_steps =
        get_field<std::vector<std::size_t>>(a, "analysis", "roundtrip_steps", an.roundtrip_steps);
    an.n_generate_per_class =
        get_field(a, "analysis", "n_generate_per_class", an.n_generate_per_class);
  }

  cfg.validate();
  return cfg;
}

std::string ExperimentConfig::to_json_text(int indent) const {
  ordered_json j;
  j["experiment"] = experiment;
  j["seed"] = seed;
  j["train_fraction"] = train_fraction;
  j["smoke"] = smoke;
  if (experiment == "gaussians2d") {
    j["dataset"] = ordered_json{{"n_samples", gaussian.n_samples},
                                {"covariance_scale", gaussian.covariance_scale}};
  } else {
    j["dataset"] = ordered_json{
        {"n_samples", factor.n_samples},        {"n_classes", factor.n_classes},
        {"rgb_low", factor.rgb_low},            {"rgb_high", factor.rgb_high},
        {"observation_dim", factor.observation_dim}, {"mixing_seed", factor.mixing_seed},
        {"noise_scale", factor.noise_scale}};
    j["vae"] = ordered_json{{"latent_dim", vae.latent_dim},
                            {"hidden", vae.hidden},
                            {"n_hidden_layers", vae.n_hidden_layers},
                            {"beta", vae.beta},
                            {"epochs", vae.epochs},
                            {"batch_size", vae.batch_size},
                            {"lr", vae.adam.lr}};
  }
  j["flow"] = ordered_json{{"scheme", scheme_name(flow.scheme)},
                           {"hidden", flow.hidden},
                           {"n_hidden_layers", flow.n_hidden_layers},
                           {"activation", activation_name(flow.act)},
                           {"embed_dim", flow.embed_dim},
                           {"time_embedding", time_embedding_name(flow.time_embedding)},
                           {"dropout_p", flow_train.dropout_p},
                           {"batch_size", flow_train.batch_size},
                           {"steps", flow_train.steps},
                           {"lr", flow_train.adam.lr}};
  j["integrator"] = ordered_json{{"method", ode_method_name(integrator.method)},
                                 {"n_steps", integrator.n_steps}};
  j["analysis"] = ordered_json{{"probe_points", analysis.probe_points},
                               {"n_train", analysis.n_train},
                               {"n_repeats", analysis.n_repeats},
                               {"ridge_lambda", analysis.ridge_lambda},
                               {"n_probe_samples", analysis.n_probe_samples},
                               {"n_transfer", analysis.n_transfer},
                               {"n_isolate", analysis.n_isolate},
                               {"isolate_reference_class", analysis.isolate_reference_class},
                               {"n_roundtrip", analysis.n_roundtrip},
                               {"roundtrip_steps", analysis.roundtrip_steps},
                               {"n_generate_per_class", analysis.n_generate_per_class}};
  return indent >= 0 ? j.dump(indent) : j.dump();
}

void ExperimentConfig::apply_smoke() {
  smoke = true;
  if (experiment == "gaussians2d") {
    gaussian.n_samples = 768;
  } else {
    factor.n_samples = 768;
  }
  vae.epochs = 3;
  vae.batch_size = 64;
  flow_train.steps = 300;
  flow_train.batch_size = 64;
  integrator.n_steps = 20;
  analysis.n_train = 64;
  analysis.n_repeats = 2;
  analysis.n_probe_samples = 128;
  analysis.n_transfer = 16;
  analysis.n_isolate = 16;
  analysis.n_roundtrip = 32;
  analysis.roundtrip_steps = {10, 20};
  analysis.n_generate_per_class = 50;
}

void ExperimentConfig::validate() const {
  if (experiment != "gaussians2d" && experiment != "factors") {
    fail("experiment", "must be \"gaussians2d\" or \"factors\"");
  }
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    fail("train_fraction", "must lie strictly between 0 and 1");
  }
  if (analysis.probe_points < 2) fail("analysis.probe_points", "need at least 2 grid points");
  if (integrator.n_steps % (analysis.probe_points - 1) != 0) {
    fail("integrator.n_steps", "must be a multiple of probe_points - 1 (= " +
                                   std::to_string(analysis.probe_points - 1) +
                                   ") so probe times lie on the integration grid");
  }
  if (analysis.n_train == 0) fail("analysis.n_train", "must be positive");
  if (analysis.n_train >= analysis.n_probe_samples) {
    fail("analysis.n_train", "must be smaller than n_probe_samples (= " +
                                 std::to_string(analysis.n_probe_samples) + ")");
  }
  if (analysis.n_repeats == 0) fail("analysis.n_repeats", "must be positive");
  if (analysis.ridge_lambda < 0.0) fail("analysis.ridge_lambda", "must be >= 0");
  if (analysis.roundtrip_steps.empty()) fail("analysis.roundtrip_steps", "must not be empty");
  if (flow_train.dropout_p < 0.0 || flow_train.dropout_p > 1.0) {
    fail("flow.dropout_p", "must lie in [0, 1]");
  }
  if (flow_train.steps == 0) fail("flow.steps", "must be positive");
  if (flow_train.batch_size == 0) fail("flow.batch_size", "must be positive");

  const std::size_t n_samples =
      experiment == "gaussians2d" ? gaussian.n_samples : factor.n_samples;
  const auto n_test = static_cast<std::size_t>(
      static_cast<double>(n_samples) * (1.0 - train_fraction));
  if (n_test < analysis.n_train + 2) {
    fail("dataset.n_samples", "test split too small for the probe protocol (test = " +
                                  std::to_string(n_test) + ", n_train = " +
                                  std::to_string(analysis.n_train) + ")");
  }

  if (experiment == "gaussians2d") {
    if (gaussian.n_samples == 0) fail("dataset.n_samples", "must be positive");
    if (gaussian.covariance_scale < 0.0) fail("dataset.covariance_scale", "must be >= 0");
    if (flow.latent_dim != 2) fail("flow", "gaussians2d uses latent_dim 2");
    if (flow.n_classes != 4) fail("flow", "gaussians2d uses 4 classes");
  } else {
    if (factor.n_samples == 0) fail("dataset.n_samples", "must be positive");
    if (factor.n_classes < 2) fail("dataset.n_classes", "need at least 2 classes");
    if (factor.observation_dim < static_cast<std::size_t>(factor.n_classes) + 3) {
      fail("dataset.observation_dim",
           "must be >= n_classes + 3 so the mixing matrix has full column rank");
    }
    if (!(factor.rgb_low < factor.rgb_high)) fail("dataset.rgb_low", "must be < rgb_high");
    if (factor.noise_scale < 0.0) fail("dataset.noise_scale", "must be >= 0");
    if (vae.input_dim != factor.observation_dim) {
      fail("vae", "input_dim must equal dataset.observation_dim");
    }
    if (vae.latent_dim == 0) fail("vae.latent_dim", "must be positive");
    if (vae.epochs == 0) fail("vae.epochs", "must be positive");
    if (vae.batch_size == 0) fail("vae.batch_size", "must be positive");
    if (vae.beta < 0.0) fail("vae.beta", "must be >= 0");
    if (flow.latent_dim != vae.latent_dim) {
      fail("flow", "latent_dim must match vae.latent_dim");
    }
    if (flow.n_classes != factor.n_classes) {
      fail("flow", "n_classes must match dataset.n_classes");
    }
    if (flow.n_continuous != 2) {
      fail("flow", "the factor experiment conditions on (class, r, g); n_continuous must be 2");
    }
    if (analysis.isolate_reference_class < 0 ||
        analysis.isolate_reference_class >= factor.n_classes) {
      fail("analysis.isolate_reference_class", "must name a valid class");
    }
  }
}

std::vector<double> ExperimentConfig::probe_grid() const {
  std::vector<double> grid(analysis.probe_points);
  for (std::size_t i = 0; i < analysis.probe_points; ++i) {
    grid[i] = static_cast<double>(i) / static_cast<double>(analysis.probe_points - 1);
  }
  return grid;
}

}  // namespace latentflow
