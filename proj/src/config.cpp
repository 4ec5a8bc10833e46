#include "dpfedrep/config.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>

#include "dpfedrep/error.hpp"

namespace dpfedrep {

const char* method_name(Method m) {
  switch (m) {
    case Method::PrivateFedRep: return "private_fedrep";
    case Method::NonPrivateFedRep: return "nonprivate_fedrep";
    case Method::LocalGd: return "local_gd";
    case Method::JlClassify: return "jl_classify";
  }
  return "unknown";
}

std::optional<Method> parse_method(const std::string& name) {
  for (Method m : {Method::PrivateFedRep, Method::NonPrivateFedRep, Method::LocalGd, Method::JlClassify})
    if (name == method_name(m)) return m;
  return std::nullopt;
}

bool method_is_private(Method m) { return m == Method::PrivateFedRep || m == Method::JlClassify; }

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

[[noreturn]] void bad(const std::string& key, const std::string& msg) {
  throw Error(ErrorCode::Config, key + ": " + msg);
}

double to_double(const std::string& key, const std::string& v) {
  if (v == "inf" || v == "infinity") return std::numeric_limits<double>::infinity();
  errno = 0;
  char* end = nullptr;
  const double x = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size() || errno == ERANGE || std::isnan(x))
    bad(key, "expected a number, got '" + v + "'");
  return x;
}

long long to_int(const std::string& key, const std::string& v) {
  errno = 0;
  char* end = nullptr;
  const long long x = std::strtoll(v.c_str(), &end, 10);
  if (v.empty() || end != v.c_str() + v.size() || errno == ERANGE) bad(key, "expected an integer, got '" + v + "'");
  return x;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  bad(key, "expected true/false, got '" + v + "'");
}

struct Field {
  const char* key;
  const char* default_text;
  const char* help;
  std::function<void(ExperimentConfig&, const std::string& key, const std::string& value)> set;
};

const std::vector<Field>& schema() {
  static const std::vector<Field> fields = {
      {"problem.d", "50", "feature dimension", [](auto& c, auto& k, auto& v) { c.problem.d = to_int(k, v); }},
      {"problem.k", "2", "rank of the shared embedding", [](auto& c, auto& k, auto& v) { c.problem.k = to_int(k, v); }},
      {"problem.n", "20000", "number of users", [](auto& c, auto& k, auto& v) { c.problem.n = to_int(k, v); }},
      {"problem.m", "10", "samples per user", [](auto& c, auto& k, auto& v) { c.problem.m = to_int(k, v); }},
      {"problem.noise_R", "0.01", "label noise standard deviation",
       [](auto& c, auto& k, auto& v) { c.problem.noise_R = to_double(k, v); }},
      {"problem.features", "gaussian", "gaussian | rademacher | sphere",
       [](auto& c, auto& k, auto& v) {
         if (v == "gaussian") c.problem.features = FeatureKind::StandardGaussian;
         else if (v == "rademacher") c.problem.features = FeatureKind::ScaledRademacher;
         else if (v == "sphere") c.problem.features = FeatureKind::UniformSphereScaled;
         else bad(k, "unknown feature kind '" + v + "'");
       }},
      {"problem.heads", "gaussian", "gaussian | unit",
       [](auto& c, auto& k, auto& v) {
         if (v == "gaussian") c.problem.heads = HeadStyle::GaussianHeads;
         else if (v == "unit") c.problem.heads = HeadStyle::UnitScaledHeads;
         else bad(k, "unknown head style '" + v + "'");
       }},
      {"fedrep.T", "5", "communication rounds", [](auto& c, auto& k, auto& v) { c.fedrep.rounds = int(to_int(k, v)); }},
      {"fedrep.eta", "2.5", "learning rate, or 'auto' for 1/(2 Lambda^2)",
       [](auto& c, auto& k, auto& v) {
         if (v == "auto") c.fedrep.eta.reset();
         else c.fedrep.eta = to_double(k, v);
       }},
      {"fedrep.nonprivate_eta", "auto", "learning rate of the non-private baseline, or 'auto' for 1/(2 Lambda^2)",
       [](auto& c, auto& k, auto& v) {
         if (v == "auto") c.fedrep.nonprivate_eta.reset();
         else c.fedrep.nonprivate_eta = to_double(k, v);
       }},
      {"fedrep.nonprivate_psi", "inf", "gradient clip bound of the non-private baseline (inf disables clipping)",
       [](auto& c, auto& k, auto& v) { c.fedrep.nonprivate_psi = to_double(k, v); }},
      {"fedrep.b", "auto", "batch size, or 'auto' for floor(pool / 2T)",
       [](auto& c, auto& k, auto& v) { c.fedrep.batch_size = v == "auto" ? 0 : to_int(k, v); }},
      {"fedrep.psi", "10", "gradient clip bound (inf disables clipping)",
       [](auto& c, auto& k, auto& v) { c.fedrep.psi = to_double(k, v); }},
      {"fedrep.init", "private", "private | random",
       [](auto& c, auto& k, auto& v) {
         if (v == "private") c.fedrep.init = InitKind::Private;
         else if (v == "random") c.fedrep.init = InitKind::Random;
         else bad(k, "unknown init mode '" + v + "'");
       }},
      {"fedrep.batch_pool", "whole", "first_half (2Tb <= m/2) | whole (2Tb <= m)",
       [](auto& c, auto& k, auto& v) {
         if (v == "first_half") c.fedrep.batch_pool = BatchPool::FirstHalf;
         else if (v == "whole") c.fedrep.batch_pool = BatchPool::WholeDataset;
         else bad(k, "unknown batch pool '" + v + "'");
       }},
      {"fedrep.Lambda", "oracle", "upper bound on sigma_max of V*/sqrt(n): number | oracle | none",
       [](auto& c, auto& k, auto& v) {
         if (v == "oracle") c.fedrep.Lambda_bound.reset(), c.fedrep.bounds_from_oracle = true;
         else if (v == "none") c.fedrep.Lambda_bound.reset(), c.fedrep.bounds_from_oracle = false;
         else c.fedrep.Lambda_bound = to_double(k, v);
       }},
      {"fedrep.lambda", "oracle", "lower bound on sigma_min of V*/sqrt(n): number | oracle | none",
       [](auto& c, auto& k, auto& v) {
         if (v == "oracle") c.fedrep.lambda_bound.reset(), c.fedrep.bounds_from_oracle = true;
         else if (v == "none") c.fedrep.lambda_bound.reset(), c.fedrep.bounds_from_oracle = false;
         else c.fedrep.lambda_bound = to_double(k, v);
       }},
      {"privacy.epsilons", "1, 2, 4, 8", "comma-separated epsilon list (may be empty)",
       [](auto& c, auto& k, auto& v) {
         c.privacy.epsilons.clear();
         for (const auto& item : split_list(v)) c.privacy.epsilons.push_back(to_double(k, item));
       }},
      {"privacy.delta", "1e-6", "delta of the (epsilon, delta) guarantee",
       [](auto& c, auto& k, auto& v) { c.privacy.delta = to_double(k, v); }},
      {"privacy.accountant", "paper", "paper (sqrt(16 ln(1.25/delta)) scale) | zcdp (exact zCDP)",
       [](auto& c, auto& k, auto& v) {
         if (v == "paper") c.privacy.accountant = NoiseMode::PaperExperiment;
         else if (v == "zcdp") c.privacy.accountant = NoiseMode::ZcdpExact;
         else bad(k, "unknown accountant '" + v + "'");
       }},
      {"privacy.psi_init", "auto", "init clip bound, or 'auto' for a quantile of ||Z_i||_F on a disposable draw",
       [](auto& c, auto& k, auto& v) {
         if (v == "auto") c.privacy.psi_init.reset();
         else c.privacy.psi_init = to_double(k, v);
       }},
      {"privacy.psi_init_quantile", "0.999", "quantile used by psi_init = auto",
       [](auto& c, auto& k, auto& v) { c.privacy.psi_init_quantile = to_double(k, v); }},
      {"local_gd.steps", "500", "gradient steps per client",
       [](auto& c, auto& k, auto& v) { c.local_gd.steps = int(to_int(k, v)); }},
      {"local_gd.lr", "auto", "step size, or 'auto' for 1/(2 lambda_max(X^T X/m))",
       [](auto& c, auto& k, auto& v) { c.local_gd.lr = v == "auto" ? 0.0 : to_double(k, v); }},
      {"classify.d", "10", "feature dimension", [](auto& c, auto& k, auto& v) { c.classify.d = to_int(k, v); }},
      {"classify.k", "1", "embedding rank", [](auto& c, auto& k, auto& v) { c.classify.k = to_int(k, v); }},
      {"classify.n", "50", "number of users", [](auto& c, auto& k, auto& v) { c.classify.n = to_int(k, v); }},
      {"classify.m", "40", "samples per user", [](auto& c, auto& k, auto& v) { c.classify.m = to_int(k, v); }},
      {"classify.rho", "0.3", "margin", [](auto& c, auto& k, auto& v) { c.classify.rho = to_double(k, v); }},
      {"classify.Gamma", "1", "head norm bound", [](auto& c, auto& k, auto& v) { c.classify.Gamma = to_double(k, v); }},
      {"classify.r", "0.5", "feature ball radius", [](auto& c, auto& k, auto& v) { c.classify.r = to_double(k, v); }},
      {"classify.k_prime", "auto", "sketch dimension, or 'auto' for ceil(c r^2 Gamma^2 ln(nm/beta)/rho^2)",
       [](auto& c, auto& k, auto& v) { c.classify.k_prime = v == "auto" ? 0 : to_int(k, v); }},
      {"classify.jl_constant", "8", "constant c of the automatic sketch dimension",
       [](auto& c, auto& k, auto& v) { c.classify.jl_constant = to_double(k, v); }},
      {"classify.beta", "0.05", "JL failure probability", [](auto& c, auto& k, auto& v) { c.classify.beta = to_double(k, v); }},
      {"classify.gamma_cover", "0.5", "cover radius gamma in (0, 1]",
       [](auto& c, auto& k, auto& v) { c.classify.gamma_cover = to_double(k, v); }},
      {"classify.cover", "lattice", "lattice | random:N (heuristic net of N points)",
       [](auto& c, auto& k, auto& v) {
         if (v == "lattice") c.classify.random_net = 0;
         else if (v.rfind("random:", 0) == 0) c.classify.random_net = std::size_t(to_int(k, v.substr(7)));
         else bad(k, "unknown cover kind '" + v + "'");
       }},
      {"classify.max_cover", "1000000", "hard cap on lattice cardinality",
       [](auto& c, auto& k, auto& v) { c.classify.max_cover = std::size_t(to_int(k, v)); }},
      {"classify.solver", "exact1d", "exact1d | grid:N (N points per axis)",
       [](auto& c, auto& k, auto& v) {
         if (v == "exact1d") c.classify.grid_points = 0;
         else if (v.rfind("grid:", 0) == 0) c.classify.grid_points = int(to_int(k, v.substr(5)));
         else bad(k, "unknown head solver '" + v + "'");
       }},
      {"classify.enforce_margin", "true", "reject samples with |<x, U* v*>| < rho",
       [](auto& c, auto& k, auto& v) { c.classify.enforce_margin = to_bool(k, v); }},
      {"classify.head_rho", "0", "margin of the final per-user head fit",
       [](auto& c, auto& k, auto& v) { c.classify.head_rho = to_double(k, v); }},
      {"classify.eval_samples", "20000", "fresh samples per user for the population 0-1 loss",
       [](auto& c, auto& k, auto& v) { c.classify.eval_samples = long(to_int(k, v)); }},
      {"methods", "private_fedrep, nonprivate_fedrep, local_gd",
       "subset of private_fedrep, nonprivate_fedrep, local_gd, jl_classify",
       [](auto& c, auto& k, auto& v) {
         c.methods.clear();
         for (const auto& item : split_list(v)) {
           const auto m = parse_method(item);
           if (!m) bad(k, "unknown method '" + item + "'");
           if (std::find(c.methods.begin(), c.methods.end(), *m) == c.methods.end()) c.methods.push_back(*m);
         }
       }},
      {"seeds", "0, 1, 2, 3, 4", "comma-separated seeds",
       [](auto& c, auto& k, auto& v) {
         c.seeds.clear();
         for (const auto& item : split_list(v)) {
           const auto s = to_int(k, item);
           if (s < 0) bad(k, "seeds must be non-negative");
           c.seeds.push_back(std::uint64_t(s));
         }
       }},
      {"output_dir", "out", "directory for CSV, SVG and dumps",
       [](auto& c, auto&, auto& v) { c.output_dir = v; }},
      {"threads", "1", "worker threads", [](auto& c, auto& k, auto& v) { c.threads = int(to_int(k, v)); }},
      {"output.record_wall_time", "false", "write wall-clock times into the CSV (breaks byte-reproducibility)",
       [](auto& c, auto& k, auto& v) { c.record_wall_time = to_bool(k, v); }},
      {"synth.max_clients", "0", "clients dumped by `synth` (0 = all)",
       [](auto& c, auto& k, auto& v) { c.synth_max_clients = std::size_t(to_int(k, v)); }},
  };
  return fields;
}

}  // namespace

void ExperimentConfig::validate() const {
  auto need = [](bool ok, const char* key, const std::string& msg) {
    if (!ok) bad(key, msg);
  };
  need(problem.d >= 1, "problem.d", "must be >= 1");
  need(problem.k >= 1 && problem.k <= problem.d, "problem.k", "must satisfy 1 <= k <= d");
  need(problem.n >= problem.k, "problem.n", "must be >= problem.k");
  need(problem.m >= 2, "problem.m", "must be >= 2");
  need(problem.noise_R >= 0, "problem.noise_R", "must be >= 0");
  need(fedrep.rounds >= 0, "fedrep.T", "must be >= 0");
  need(!fedrep.eta || *fedrep.eta > 0, "fedrep.eta", "must be > 0");
  need(fedrep.eta || fedrep.Lambda_bound || fedrep.bounds_from_oracle, "fedrep.eta",
       "'auto' needs fedrep.Lambda (number or oracle)");
  need(!fedrep.nonprivate_eta || *fedrep.nonprivate_eta > 0, "fedrep.nonprivate_eta", "must be > 0");
  need(fedrep.nonprivate_eta || fedrep.Lambda_bound || fedrep.bounds_from_oracle, "fedrep.nonprivate_eta",
       "'auto' needs fedrep.Lambda (number or oracle)");
  need(fedrep.nonprivate_psi > 0, "fedrep.nonprivate_psi", "must be > 0");
  need(fedrep.batch_size >= 0, "fedrep.b", "must be >= 1 or auto");
  need(fedrep.psi > 0, "fedrep.psi", "must be > 0");
  if (fedrep.Lambda_bound) need(*fedrep.Lambda_bound > 0, "fedrep.Lambda", "must be > 0");
  if (fedrep.lambda_bound) need(*fedrep.lambda_bound > 0, "fedrep.lambda", "must be > 0");
  if (fedrep.Lambda_bound && fedrep.lambda_bound)
    need(*fedrep.Lambda_bound >= *fedrep.lambda_bound, "fedrep.Lambda", "must be >= fedrep.lambda");
  {
    const Eigen::Index pool = fedrep.batch_pool == BatchPool::FirstHalf ? problem.m / 2 : problem.m;
    const Eigen::Index b = fedrep.batch_size;
    if (fedrep.rounds > 0) {
      if (b == 0)
        need(pool / (2 * fedrep.rounds) >= 1, "fedrep.b",
             "auto batch size is 0: pool of " + std::to_string(pool) + " samples cannot feed 2T = " +
                 std::to_string(2 * fedrep.rounds) + " batches");
      else
        need(2 * fedrep.rounds * b <= pool, "fedrep.b",
             "2*T*b = " + std::to_string(2 * fedrep.rounds * b) + " exceeds the batch pool (" + std::to_string(pool) + ")");
    }
  }
  for (double e : privacy.epsilons) need(e > 0, "privacy.epsilons", "every epsilon must be > 0");
  need(privacy.delta > 0 && privacy.delta < 1, "privacy.delta", "must lie in (0, 1)");
  if (privacy.psi_init) need(*privacy.psi_init > 0, "privacy.psi_init", "must be > 0");
  need(privacy.psi_init_quantile > 0 && privacy.psi_init_quantile <= 1, "privacy.psi_init_quantile", "must lie in (0, 1]");
  need(local_gd.steps >= 1, "local_gd.steps", "must be >= 1");
  need(local_gd.lr >= 0, "local_gd.lr", "must be > 0 or auto");
  need(!methods.empty(), "methods", "at least one method required");
  need(!seeds.empty(), "seeds", "at least one seed required");
  need(threads >= 1, "threads", "must be >= 1");
  if (std::find(methods.begin(), methods.end(), Method::JlClassify) != methods.end()) {
    need(classify.d >= 1, "classify.d", "must be >= 1");
    need(classify.k >= 1 && classify.k <= classify.d, "classify.k", "must satisfy 1 <= k <= d");
    need(classify.n >= classify.k, "classify.n", "must be >= classify.k");
    need(classify.m >= 2, "classify.m", "must be >= 2");
    need(classify.rho > 0, "classify.rho", "must be > 0");
    need(classify.Gamma > 0, "classify.Gamma", "must be > 0");
    need(classify.r > 0, "classify.r", "must be > 0");
    need(classify.k_prime >= 0, "classify.k_prime", "must be >= 1 or auto");
    need(classify.gamma_cover > 0 && classify.gamma_cover <= 1, "classify.gamma_cover", "must lie in (0, 1]");
    need(classify.grid_points == 0 || classify.grid_points >= 2, "classify.solver", "grid needs >= 2 points per axis");
    need(classify.grid_points != 0 || classify.k == 1, "classify.solver", "exact1d needs classify.k = 1");
    need(classify.eval_samples >= 1, "classify.eval_samples", "must be >= 1");
  }
}

ExperimentConfig parse_config(std::istream& in, const std::string& source_name) {
  std::map<std::string, const Field*> by_key;
  for (const auto& f : schema()) by_key.emplace(f.key, &f);

  ExperimentConfig cfg;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = source_name + ":" + std::to_string(line_no);
    if (eq == std::string::npos) throw Error(ErrorCode::Config, where + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = by_key.find(key);
    if (it == by_key.end()) throw Error(ErrorCode::Config, where + ": unknown key '" + key + "'");
    try {
      it->second->set(cfg, key, value);
    } catch (const Error& e) {
      throw Error(ErrorCode::Config, where + ": " + e.detail());
    }
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Config, "cannot open config file " + path.string());
  return parse_config(in, path.string());
}

void describe_config_schema(std::ostream& os) {
  os << "# Experiment configuration: one `key = value` per line, '#' starts a comment.\n"
        "# Unlisted keys keep the default shown here.\n\n";
  for (const auto& f : schema()) os << f.key << " = " << f.default_text << "    # " << f.help << '\n';
}

}  // namespace dpfedrep
