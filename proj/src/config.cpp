#include "bpo/config.hpp"

#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <boost/algorithm/string.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "bpo/errors.hpp"

namespace bpo {
namespace {

namespace pt = boost::property_tree;

class Section {
 public:
  Section(std::string name, const pt::ptree* tree) : name_(std::move(name)), tree_(tree) {}

  bool has(const std::string& key) const { return tree_ && tree_->find(key) != tree_->not_found(); }

  std::string raw(const std::string& key) const {
    used_.insert(key);
    return boost::trim_copy(tree_->get<std::string>(key));
  }

  std::string str(const std::string& key, const std::string& fallback) const {
    return has(key) ? boost::to_lower_copy(raw(key)) : fallback;
  }

  double real(const std::string& key, double fallback) const {
    return has(key) ? parse_real(raw(key), key) : fallback;
  }

  std::uint64_t count(const std::string& key, std::uint64_t fallback) const {
    if (!has(key)) return fallback;
    const std::string s = raw(key);
    if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos)
      throw ConfigError(where(key) + ": expected a nonnegative integer, got '" + s + "'");
    try {
      return std::stoull(s);
    } catch (const std::exception&) {
      throw ConfigError(where(key) + ": integer out of range");
    }
  }

  bool flag(const std::string& key, bool fallback) const {
    return has(key) ? parse_bool(raw(key), key) : fallback;
  }

  std::vector<std::string> list(const std::string& key) const {
    std::vector<std::string> items;
    const std::string s = raw(key);
    boost::split(items, s, boost::is_any_of(", "), boost::token_compress_on);
    std::erase_if(items, [](const std::string& x) { return x.empty(); });
    if (items.empty()) throw ConfigError(where(key) + ": empty list");
    return items;
  }

  std::vector<double> reals(const std::string& key) const {
    std::vector<double> out;
    for (const auto& s : list(key)) out.push_back(parse_real(s, key));
    return out;
  }

  double parse_real(const std::string& s, const std::string& key) const {
    try {
      std::size_t used = 0;
      const double x = std::stod(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
      return x;
    } catch (const std::exception&) {
      throw ConfigError(where(key) + ": expected a number, got '" + s + "'");
    }
  }

  bool parse_bool(const std::string& s, const std::string& key) const {
    const std::string v = boost::to_lower_copy(s);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError(where(key) + ": expected true or false, got '" + s + "'");
  }

  std::string where(const std::string& key) const { return "[" + name_ + "] " + key; }

  void reject_unused() const {
    if (!tree_) return;
    for (const auto& [key, value] : *tree_)
      if (!used_.contains(key)) throw ConfigError("unknown key " + where(key));
  }

 private:
  std::string name_;
  const pt::ptree* tree_;
  mutable std::set<std::string> used_;
};

Section section(const pt::ptree& root, const std::string& name) {
  auto it = root.find(name);
  return Section(name, it == root.not_found() ? nullptr : &it->second);
}

Eigen::VectorXd parse_vector(const Section& s, const std::string& key, int size,
                             double fallback) {
  if (!s.has(key)) return Eigen::VectorXd::Constant(size, fallback);
  const auto values = s.reals(key);
  if (values.size() == 1) return Eigen::VectorXd::Constant(size, values[0]);
  if (static_cast<int>(values.size()) != size)
    throw ConfigError(s.where(key) + ": expected 1 or " + std::to_string(size) + " values");
  return Eigen::Map<const Eigen::VectorXd>(values.data(), size);
}

EnvSpec parse_env(const Section& s) {
  const std::string kind = s.str("kind", "lq");
  const int horizon = static_cast<int>(s.count("horizon", kind == "cartpole" ? 100 : 2));
  EnvSpec env;
  if (kind == "lq") {
    const int dim = static_cast<int>(s.count("state_dim", 1));
    if (dim < 1) throw ConfigError("[env] state_dim must be >= 1");
    const EnvSpec defaults = make_lq(1, 1, 0.5);
    env = make_lq(dim, horizon, s.real("discount", 0.5));
    env.lq.a *= s.real("a", defaults.lq.a(0, 0));
    env.lq.b *= s.real("b", defaults.lq.b(0, 0));
    env.lq.q_diag *= s.real("q", 1.0);
    env.lq.r_diag *= s.real("r", 1.0);
    env.lq.noise_std = s.real("noise_std", defaults.lq.noise_std);
    env.lq.init_range = s.real("init_range", defaults.lq.init_range);
    env.lq.state_box = s.real("state_box", defaults.lq.state_box);
    env.lq.action_box = s.real("action_box", defaults.lq.action_box);
    env.r_max = lq_reward_bound(env.lq);
  } else if (kind == "cartpole") {
    env = make_cartpole(horizon, s.real("discount", 0.99));
    env.cartpole.force_mag = s.real("force_mag", env.cartpole.force_mag);
    env.cartpole.init_range = s.real("init_range", env.cartpole.init_range);
  } else {
    throw ConfigError("[env] kind must be lq or cartpole, got '" + kind + "'");
  }
  s.reject_unused();
  return env;
}

PolicyParams parse_policy(const Section& s, const EnvSpec& env) {
  const int ds = env.state_dim, da = env.action_dim;
  Eigen::MatrixXd theta = Eigen::MatrixXd::Zero(ds, da);
  if (s.has("theta")) {
    try {
      theta = parse_theta(s.raw("theta"), ds, da);
    } catch (const ConfigError& e) {
      throw ConfigError(s.where("theta") + ": " + e.what());
    }
  }
  const Eigen::VectorXd log_std = parse_vector(s, "log_std", da, 0.0);
  s.reject_unused();
  return PolicyParams(theta, log_std);
}

Variant parse_variant(const std::string& v) {
  if (v == "theoretical") return Variant::kTheoreticalBpo;
  if (v == "practical") return Variant::kPracticalBpo;
  if (v == "on_policy") return Variant::kOnPolicy;
  if (v == "storm_pg") return Variant::kStormPg;
  throw ConfigError("[algo] variant must be theoretical, practical, on_policy or storm_pg");
}

Estimator parse_estimator(const std::string& v, const std::string& where) {
  if (v == "gpomdp") return Estimator::kGpomdp;
  if (v == "reinforce") return Estimator::kReinforce;
  throw ConfigError(where + ": estimator must be gpomdp or reinforce");
}

BaselineKind parse_baseline(const std::string& v, const std::string& where) {
  if (v == "optimal") return BaselineKind::kOptimal;
  if (v == "none") return BaselineKind::kNone;
  throw ConfigError(where + ": baseline must be optimal or none");
}

void parse_algo(const Section& s, AlgoConfig& a) {
  a.variant = parse_variant(s.str("variant", "practical"));
  a.n_bpo = s.count("n_bpo", a.n_bpo);
  a.n_pg = s.count("n_pg", a.n_pg);
  if (s.has("beta")) {
    const std::string b = boost::to_lower_copy(s.raw("beta"));
    a.beta = b == "auto" ? std::nullopt : std::optional<double>(s.parse_real(b, "beta"));
  }
  a.step_size = s.real("step_size", a.step_size);
  a.iterations = s.count("iterations", a.iterations);
  a.estimator = parse_estimator(s.str("estimator", "gpomdp"), s.where("estimator"));
  a.baseline = parse_baseline(s.str("baseline", "optimal"), s.where("baseline"));
  a.seed = s.count("seed", a.seed);
  a.offline_kl = s.flag("offline_kl", a.offline_kl);
  a.biased = s.flag("biased", a.biased);
  a.storm_momentum = s.real("momentum", a.storm_momentum);
  a.eval_episodes = s.count("eval_episodes", a.eval_episodes);
  if (s.has("ridge")) a.ridge = s.real("ridge", 0.0);
  s.reject_unused();
}

void parse_sweep(const Section& s, RunConfig& cfg) {
  SweepSpec& g = cfg.sweep;
  if (s.has("param")) {
    const std::string p = s.str("param", "theta");
    if (p == "theta") g.param = SweptParam::kTheta;
    else if (p == "log_std") g.param = SweptParam::kLogStd;
    else if (p == "horizon") g.param = SweptParam::kHorizon;
    else if (p == "state_dim") g.param = SweptParam::kStateDim;
    else throw ConfigError("[sweep] param must be theta, log_std, horizon or state_dim");
  }
  if (s.has("values")) {
    g.values = s.reals("values");
  } else {
    // Sweep the configured policy only.
    const auto& th = cfg.algo.initial;
    switch (g.param) {
      case SweptParam::kTheta: g.values = {th.theta()(0, 0)}; break;
      case SweptParam::kLogStd: g.values = {th.log_std()(0)}; break;
      case SweptParam::kHorizon: g.values = {static_cast<double>(cfg.algo.env.horizon)}; break;
      case SweptParam::kStateDim: g.values = {static_cast<double>(cfg.algo.env.state_dim)}; break;
    }
  }
  if (s.has("betas")) g.betas = s.reals("betas");
  if (s.has("sizes")) {
    g.sizes.clear();
    for (const auto& item : s.list("sizes")) {
      std::vector<std::string> parts;
      boost::split(parts, item, boost::is_any_of(":"));
      if (parts.size() != 2) throw ConfigError("[sweep] sizes entries look like n_bpo:n_pg");
      const double nb = s.parse_real(parts[0], "sizes"), np = s.parse_real(parts[1], "sizes");
      if (nb < 1 || np < 2 || nb != std::floor(nb) || np != std::floor(np))
        throw ConfigError("[sweep] sizes need integer n_bpo >= 1 and n_pg >= 2");
      g.sizes.emplace_back(static_cast<std::size_t>(nb), static_cast<std::size_t>(np));
    }
  }
  if (s.has("biased")) {
    g.biased.clear();
    for (const auto& item : s.list("biased")) g.biased.push_back(s.parse_bool(item, "biased"));
  }
  cfg.gap.reps = s.count("reps", cfg.gap.reps);
  cfg.gap.force_target_behavioral = s.flag("force_target_behavioral", false);
  cfg.gap.on_policy_control = s.flag("on_policy_control", false);
  s.reject_unused();
}

}  // namespace

Eigen::MatrixXd parse_theta(const std::string& text, int rows, int cols) {
  std::vector<std::string> items;
  boost::split(items, text, boost::is_any_of(", "), boost::token_compress_on);
  std::erase_if(items, [](const std::string& x) { return x.empty(); });
  std::vector<double> values;
  for (const auto& s : items) {
    try {
      std::size_t used = 0;
      values.push_back(std::stod(s, &used));
      if (used != s.size()) throw std::invalid_argument(s);
    } catch (const std::exception&) {
      throw ConfigError("expected a number, got '" + s + "'");
    }
  }
  Eigen::MatrixXd theta = Eigen::MatrixXd::Zero(rows, cols);
  if (values.size() == 1) {
    theta.diagonal().setConstant(values[0]);
  } else if (static_cast<int>(values.size()) == rows * cols) {
    for (int i = 0; i < rows; ++i)
      for (int k = 0; k < cols; ++k) theta(i, k) = values[static_cast<std::size_t>(i * cols + k)];
  } else {
    throw ConfigError("expected 1 or " + std::to_string(rows * cols) + " values");
  }
  return theta;
}

RunConfig parse_config(std::istream& in) {
  pt::ptree root;
  try {
    pt::read_ini(in, root);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  static const std::set<std::string> known{"env", "policy", "algo", "sweep"};
  for (const auto& [name, sub] : root) {
    if (!known.contains(name)) throw ConfigError("unknown section [" + name + "]");
    if (sub.empty() && !sub.data().empty())
      throw ConfigError("key '" + name + "' outside of a section");
  }
  RunConfig cfg;
  cfg.algo.env = parse_env(section(root, "env"));
  cfg.warnings = cfg.algo.env.validate();
  cfg.algo.initial = parse_policy(section(root, "policy"), cfg.algo.env);
  parse_algo(section(root, "algo"), cfg.algo);
  cfg.gap.seed = cfg.algo.seed;
  cfg.gap.estimator = cfg.algo.estimator;
  cfg.gap.baseline = cfg.algo.baseline;
  cfg.gap.ridge = cfg.algo.ridge;
  parse_sweep(section(root, "sweep"), cfg);
  cfg.algo.validate();
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  return parse_config(in);
}

}  // namespace bpo
