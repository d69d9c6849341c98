#include <cmath>
#include <fstream>
#include <initializer_list>
#include <sstream>

#include "cairl/experiment.hpp"

namespace cairl {

using nlohmann::json;

std::string to_string(Method method) {
  switch (method) {
    case Method::Mma: return "mma";
    case Method::Cirl: return "cirl";
    case Method::Airl: return "airl";
    case Method::Cairl: return "cairl";
    case Method::Bc: return "bc";
  }
  return "?";
}

Method method_from_string(const std::string& name) {
  if (name == "mma") return Method::Mma;
  if (name == "cirl") return Method::Cirl;
  if (name == "airl") return Method::Airl;
  if (name == "cairl") return Method::Cairl;
  if (name == "bc") return Method::Bc;
  throw ValidationError("unknown method '" + name + "' (expected mma, cirl, airl, cairl or bc)");
}

namespace {

// Every object is read through this helper so that unknown keys are rejected
// and type mismatches name the offending path.
class Reader {
 public:
  Reader(const json& doc, std::string path, std::initializer_list<const char*> keys) : doc_(doc), path_(std::move(path)) {
    if (!doc_.is_object()) throw ValidationError(where() + " must be an object");
    for (const auto& [key, value] : doc_.items()) {
      bool known = false;
      for (const char* k : keys) known = known || key == k;
      if (!known) throw ValidationError("unknown key '" + key + "' in " + where());
    }
  }

  template <typename T>
  void read(const char* key, T& out) const {
    if (!doc_.contains(key)) return;
    try {
      out = doc_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ValidationError("wrong type for " + child(key));
    }
  }

  // Enum stored as a string.
  template <typename T, typename Parse>
  void read_enum(const char* key, T& out, Parse parse) const {
    std::string name;
    if (!doc_.contains(key)) return;
    read(key, name);
    out = parse(name);
  }

  bool has(const char* key) const { return doc_.contains(key); }
  const json& at(const char* key) const { return doc_.at(key); }
  std::string child(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  std::string where() const { return path_.empty() ? "config" : "'" + path_ + "'"; }
  const json& doc_;
  std::string path_;
};

const char* vital_name(sepsis::Vital v) { return sepsis::kVitalNames[static_cast<std::size_t>(v)]; }

sepsis::Vital vital_from_string(const std::string& name) {
  for (int v = 0; v < sepsis::kNumVitals; ++v)
    if (name == sepsis::kVitalNames[static_cast<std::size_t>(v)]) return static_cast<sepsis::Vital>(v);
  throw ValidationError("unknown vital '" + name + "'");
}

const char* treatment_name(sepsis::Treatment t) {
  switch (t) {
    case sepsis::Treatment::Antibiotics: return "antibiotics";
    case sepsis::Treatment::Ventilation: return "ventilation";
    case sepsis::Treatment::Vasopressors: return "vasopressors";
  }
  return "?";
}

sepsis::Treatment treatment_from_string(const std::string& name) {
  if (name == "antibiotics") return sepsis::Treatment::Antibiotics;
  if (name == "ventilation") return sepsis::Treatment::Ventilation;
  if (name == "vasopressors") return sepsis::Treatment::Vasopressors;
  throw ValidationError("unknown treatment '" + name + "'");
}

const char* effect_name(sepsis::EffectKind k) {
  switch (k) {
    case sepsis::EffectKind::TowardNormal: return "toward_normal";
    case sepsis::EffectKind::Raise: return "raise";
    case sepsis::EffectKind::Lower: return "lower";
  }
  return "?";
}

sepsis::EffectKind effect_from_string(const std::string& name) {
  if (name == "toward_normal") return sepsis::EffectKind::TowardNormal;
  if (name == "raise") return sepsis::EffectKind::Raise;
  if (name == "lower") return sepsis::EffectKind::Lower;
  throw ValidationError("unknown effect kind '" + name + "'");
}

GeneratorKind generator_kind_from_string(const std::string& name) {
  if (name == "soft_vi") return GeneratorKind::SoftValueIteration;
  if (name == "hard_vi") return GeneratorKind::HardValueIteration;
  if (name == "soft_q") return GeneratorKind::SoftQ;
  throw ValidationError("unknown generator kind '" + name + "' (expected soft_vi, hard_vi or soft_q)");
}

json dynamics_to_json(const sepsis::DynamicsConfig& d) {
  json drift = json::array();
  for (const auto& v : d.drift) drift.push_back({{"direction", v.direction}, {"probability", v.probability}});
  json effects = json::array();
  for (const auto& e : d.effects)
    effects.push_back({{"treatment", treatment_name(e.treatment)},
                       {"vital", vital_name(e.vital)},
                       {"kind", effect_name(e.kind)},
                       {"probability", e.probability}});
  json initial = json::array();
  for (const auto& levels : d.initial_levels) initial.push_back(levels);
  return {{"drift", drift},
          {"diabetic_glucose_fluctuation", d.diabetic_glucose_fluctuation},
          {"effects", effects},
          {"diabetes_prevalence", d.diabetes_prevalence},
          {"initial_levels", initial},
          {"horizon", d.horizon}};
}

sepsis::DynamicsConfig dynamics_from_json(const json& doc) {
  sepsis::DynamicsConfig d = sepsis::default_dynamics();
  Reader r(doc, "dynamics",
           {"drift", "diabetic_glucose_fluctuation", "effects", "diabetes_prevalence", "initial_levels", "horizon"});
  if (r.has("drift")) {
    const json& arr = r.at("drift");
    if (!arr.is_array() || arr.size() != sepsis::kNumVitals)
      throw ValidationError("dynamics.drift must list one entry per vital");
    for (std::size_t v = 0; v < arr.size(); ++v) {
      Reader e(arr[v], "dynamics.drift", {"direction", "probability"});
      e.read("direction", d.drift[v].direction);
      e.read("probability", d.drift[v].probability);
    }
  }
  r.read("diabetic_glucose_fluctuation", d.diabetic_glucose_fluctuation);
  if (r.has("effects")) {
    const json& arr = r.at("effects");
    if (!arr.is_array()) throw ValidationError("dynamics.effects must be an array");
    d.effects.clear();
    for (const json& item : arr) {
      Reader e(item, "dynamics.effects", {"treatment", "vital", "kind", "probability"});
      sepsis::TreatmentEffect effect;
      e.read_enum("treatment", effect.treatment, treatment_from_string);
      e.read_enum("vital", effect.vital, vital_from_string);
      e.read_enum("kind", effect.kind, effect_from_string);
      e.read("probability", effect.probability);
      d.effects.push_back(effect);
    }
  }
  r.read("diabetes_prevalence", d.diabetes_prevalence);
  if (r.has("initial_levels")) {
    std::vector<std::vector<double>> levels;
    r.read("initial_levels", levels);
    if (levels.size() != sepsis::kNumVitals)
      throw ValidationError("dynamics.initial_levels must list one distribution per vital");
    for (std::size_t v = 0; v < levels.size(); ++v) d.initial_levels[v] = levels[v];
  }
  r.read("horizon", d.horizon);
  return d;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (!(gamma >= 0 && gamma < 1)) throw ValidationError("gamma must lie in [0, 1)");
  if (n_trajectories <= 0) throw ValidationError("n_trajectories must be positive");
  if (seeds.empty()) throw ValidationError("seeds must not be empty");
  if (noise_bins < 2) throw ValidationError("noise_bins must be at least 2");
  if (method == Method::Mma || method == Method::Cirl || method == Method::Bc) {
    if (reward_model == RewardFamily::Mlp && method != Method::Bc)
      throw ValidationError(to_string(method) + " uses a linear reward; reward_model must be linear or gam");
  }
  if (!(estimation.policy_smoothing >= 0)) throw ValidationError("estimation.policy_smoothing must be non-negative");
  if (!(estimation.transition_smoothing >= 0))
    throw ValidationError("estimation.transition_smoothing must be non-negative");
  if (!(estimation.clip_max > 0)) throw ValidationError("estimation.clip_max must be positive");
  if (estimation.iptw && !(estimation.policy_smoothing > 0))
    throw ValidationError("IPTW needs estimation.policy_smoothing > 0 for overlap");
  dynamics.validate();
  discriminator_config().validate();
  generator.validate();
  mma.validate();
}

DiscriminatorConfig ExperimentConfig::discriminator_config() const {
  DiscriminatorConfig c = discriminator;
  c.gamma = gamma;
  c.reward_family = reward_model;
  c.feature_map_mode = method == Method::Airl ? FeatureMapMode::CurrentState : FeatureMapMode::NextState;
  return c;
}

json to_json(const ExperimentConfig& c) {
  const DiscriminatorConfig& d = c.discriminator;
  const GeneratorConfig& g = c.generator;
  const SoftQConfig& q = g.soft_q;
  json seeds = json::array();
  for (auto s : c.seeds) seeds.push_back(s);
  return {
      {"mdp_kind", sepsis::to_string(c.mdp_kind)},
      {"gamma", c.gamma},
      {"method", to_string(c.method)},
      {"reward_model", to_string(c.reward_model)},
      {"transition", c.transition == TransitionSource::True ? "true" : "estimated"},
      {"n_trajectories", c.n_trajectories},
      {"seeds", seeds},
      {"noise_per_timestep", c.noise_per_timestep},
      {"noise_bins", c.noise_bins},
      {"expert", c.expert == ExpertKind::Stationary ? "stationary" : "finite_horizon"},
      {"eval_policy", c.eval_policy == EvalPolicy::Greedy ? "greedy" : "generator"},
      {"dynamics", dynamics_to_json(c.dynamics)},
      {"discriminator",
       {{"mlp_hidden", d.mlp.hidden},
        {"label_smoothing", d.label_smoothing},
        {"input_noise_sigma", d.input_noise_sigma},
        {"noise_decay_fraction", d.noise_decay_fraction},
        {"disc_steps_per_gen_update", d.disc_steps_per_gen_update},
        {"batch_size", d.batch_size},
        {"learning_rate", d.learning_rate},
        {"epochs", d.epochs},
        {"use_shaping", d.use_shaping},
        {"gamma_on_shaping", d.gamma_on_shaping}}},
      {"generator",
       {{"kind", to_string(g.kind)},
        {"alpha", g.alpha},
        {"epsilon", g.epsilon},
        {"tol", g.planning.tol},
        {"max_sweeps", g.planning.max_sweeps},
        {"bc_smoothing", g.bc_smoothing},
        {"soft_q",
         {{"delta_sim", q.delta_sim},
          {"bc_lambda0", q.bc_lambda0},
          {"bc_decay", q.bc_decay},
          {"learning_rate", q.learning_rate},
          {"epochs", q.epochs},
          {"sync_rate", q.sync_rate},
          {"huber_kappa", q.huber_kappa},
          {"initial_q", q.initial_q},
          {"expected_simulation", q.expected_simulation}}}}},
      {"mma",
       {{"epsilon", c.mma.epsilon},
        {"max_iters", c.mma.max_iters},
        {"tol", c.mma.planning.tol},
        {"max_sweeps", c.mma.planning.max_sweeps}}},
      {"estimation",
       {{"policy_smoothing", c.estimation.policy_smoothing},
        {"transition_smoothing", c.estimation.transition_smoothing},
        {"clip_max", c.estimation.clip_max},
        {"iptw", c.estimation.iptw}}},
  };
}

ExperimentConfig experiment_config_from_json(const json& doc) {
  ExperimentConfig c;
  Reader r(doc, "",
           {"mdp_kind", "gamma", "method", "reward_model", "transition", "n_trajectories", "seeds",
            "noise_per_timestep", "noise_bins", "expert", "eval_policy", "dynamics", "discriminator", "generator",
            "mma", "estimation"});
  r.read_enum("mdp_kind", c.mdp_kind, sepsis::reward_kind_from_string);
  r.read("gamma", c.gamma);
  r.read_enum("method", c.method, method_from_string);
  r.read_enum("reward_model", c.reward_model, reward_family_from_string);
  r.read_enum("transition", c.transition, [](const std::string& s) {
    if (s == "true") return TransitionSource::True;
    if (s == "estimated") return TransitionSource::Estimated;
    throw ValidationError("unknown transition source '" + s + "' (expected true or estimated)");
  });
  r.read("n_trajectories", c.n_trajectories);
  r.read("seeds", c.seeds);
  r.read("noise_per_timestep", c.noise_per_timestep);
  r.read("noise_bins", c.noise_bins);
  r.read_enum("expert", c.expert, [](const std::string& s) {
    if (s == "stationary") return ExpertKind::Stationary;
    if (s == "finite_horizon") return ExpertKind::FiniteHorizon;
    throw ValidationError("unknown expert kind '" + s + "' (expected stationary or finite_horizon)");
  });
  r.read_enum("eval_policy", c.eval_policy, [](const std::string& s) {
    if (s == "greedy") return EvalPolicy::Greedy;
    if (s == "generator") return EvalPolicy::Generator;
    throw ValidationError("unknown eval_policy '" + s + "' (expected greedy or generator)");
  });
  if (r.has("dynamics")) c.dynamics = dynamics_from_json(r.at("dynamics"));

  if (r.has("discriminator")) {
    DiscriminatorConfig& d = c.discriminator;
    Reader dr(r.at("discriminator"), "discriminator",
              {"mlp_hidden", "label_smoothing", "input_noise_sigma", "noise_decay_fraction",
               "disc_steps_per_gen_update", "batch_size", "learning_rate", "epochs", "use_shaping",
               "gamma_on_shaping"});
    dr.read("mlp_hidden", d.mlp.hidden);
    dr.read("label_smoothing", d.label_smoothing);
    dr.read("input_noise_sigma", d.input_noise_sigma);
    dr.read("noise_decay_fraction", d.noise_decay_fraction);
    dr.read("disc_steps_per_gen_update", d.disc_steps_per_gen_update);
    dr.read("batch_size", d.batch_size);
    dr.read("learning_rate", d.learning_rate);
    dr.read("epochs", d.epochs);
    dr.read("use_shaping", d.use_shaping);
    dr.read("gamma_on_shaping", d.gamma_on_shaping);
  }
  if (r.has("generator")) {
    GeneratorConfig& g = c.generator;
    Reader gr(r.at("generator"), "generator",
              {"kind", "alpha", "epsilon", "tol", "max_sweeps", "bc_smoothing", "soft_q"});
    gr.read_enum("kind", g.kind, generator_kind_from_string);
    gr.read("alpha", g.alpha);
    gr.read("epsilon", g.epsilon);
    gr.read("tol", g.planning.tol);
    gr.read("max_sweeps", g.planning.max_sweeps);
    gr.read("bc_smoothing", g.bc_smoothing);
    if (gr.has("soft_q")) {
      SoftQConfig& q = g.soft_q;
      Reader qr(gr.at("soft_q"), "generator.soft_q",
                {"delta_sim", "bc_lambda0", "bc_decay", "learning_rate", "epochs", "sync_rate", "huber_kappa",
                 "initial_q", "expected_simulation"});
      qr.read("delta_sim", q.delta_sim);
      qr.read("bc_lambda0", q.bc_lambda0);
      qr.read("bc_decay", q.bc_decay);
      qr.read("learning_rate", q.learning_rate);
      qr.read("epochs", q.epochs);
      qr.read("sync_rate", q.sync_rate);
      qr.read("huber_kappa", q.huber_kappa);
      qr.read("initial_q", q.initial_q);
      qr.read("expected_simulation", q.expected_simulation);
    }
  }
  // The soft-Q learner shares the generator's temperature.
  c.generator.soft_q.alpha = c.generator.alpha;
  if (r.has("mma")) {
    Reader mr(r.at("mma"), "mma", {"epsilon", "max_iters", "tol", "max_sweeps"});
    mr.read("epsilon", c.mma.epsilon);
    mr.read("max_iters", c.mma.max_iters);
    mr.read("tol", c.mma.planning.tol);
    mr.read("max_sweeps", c.mma.planning.max_sweeps);
  }
  c.mma.feature_map_mode = c.method == Method::Cirl ? MmaFeatureMode::ExpectedNextState : MmaFeatureMode::CurrentState;
  if (r.has("estimation")) {
    Reader er(r.at("estimation"), "estimation", {"policy_smoothing", "transition_smoothing", "clip_max", "iptw"});
    er.read("policy_smoothing", c.estimation.policy_smoothing);
    er.read("transition_smoothing", c.estimation.transition_smoothing);
    er.read("clip_max", c.estimation.clip_max);
    er.read("iptw", c.estimation.iptw);
  }
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream file(path);
  if (!file) throw IoError("cannot read config " + path);
  json doc;
  try {
    doc = json::parse(file, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw ParseError("config " + path + ": " + e.what());
  }
  return experiment_config_from_json(doc);
}

void save_config(const std::string& path, const ExperimentConfig& config) {
  std::ofstream file(path);
  if (!file) throw IoError("cannot write " + path);
  file << to_json(config).dump(2) << '\n';
  if (!file) throw IoError("failed writing " + path);
}

std::string method_label(Method method, RewardFamily family) {
  switch (method) {
    case Method::Mma: return "MMA";
    case Method::Cirl: return "CIRL";
    case Method::Bc: return "BC";
    case Method::Airl:
    case Method::Cairl: break;
  }
  const char* prefix = family == RewardFamily::Gam ? "GAM" : family == RewardFamily::Linear ? "Linear" : "FCNN";
  return std::string(prefix) + (method == Method::Airl ? "-AIRL" : "-CAIRL");
}

}  // namespace cairl
