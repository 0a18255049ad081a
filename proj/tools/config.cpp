#include "config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "uln/error.hpp"
#include "uln/numerics.hpp"

namespace uln::cli {
namespace {

using Section = std::map<std::string, std::string>;

[[noreturn]] void config_error(const std::string& msg) { throw Error(ErrorCode::ConfigError, msg); }

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& raw) {
  const std::string s = trim(raw);
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || !std::isfinite(v))
    config_error(key + ": expected a number, got '" + raw + "'");
  return v;
}

std::uint64_t to_u64(const std::string& key, const std::string& raw) {
  const std::string s = trim(raw);
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size())
    config_error(key + ": expected a non-negative integer, got '" + raw + "'");
  return v;
}

std::size_t to_size(const std::string& key, const std::string& raw) {
  return static_cast<std::size_t>(to_u64(key, raw));
}

bool to_bool(const std::string& key, const std::string& raw) {
  std::string s = trim(raw);
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  config_error(key + ": expected true or false, got '" + raw + "'");
}

std::vector<std::string> split_list(const std::string& raw) {
  std::vector<std::string> out;
  if (trim(raw).empty()) return out;
  std::stringstream ss(raw);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

std::vector<double> to_doubles(const std::string& key, const std::string& raw) {
  std::vector<double> out;
  for (const auto& item : split_list(raw)) out.push_back(to_double(key, item));
  return out;
}

std::vector<std::size_t> to_sizes(const std::string& key, const std::string& raw) {
  std::vector<std::size_t> out;
  for (const auto& item : split_list(raw)) out.push_back(to_size(key, item));
  return out;
}

Section experiment_defaults(Kind kind) {
  Section s{{"kind", kind_name(kind)}};
  switch (kind) {
    case Kind::Simulate:
      s.insert({{"burn_in", "0.5"}, {"sigma2_grid", ""}, {"write_dataset", "true"}});
      break;
    case Kind::Stationary:
      s.insert({{"burn_in", "0.5"},
                {"n_batches", "100"},
                {"ou_times", "0,1,10,100,1000"}});
      break;
    case Kind::DsmCompare:
      s.insert({{"burn_in", "0.5"}});
      break;
    case Kind::ApproxOrder:
      s.insert({{"eta_list", "0.04,0.02,0.01,0.005"},
                {"horizon", "1"},
                {"order_replicas", "200"},
                {"sde_eta", "0.01"},
                {"tied", "false"},
                {"ref_divisor", "16"}});
      break;
    case Kind::Bounds:
      s.insert({{"trials", "500"},
                {"delta_conf", "0.05"},
                {"train_n", "200"},
                {"hidden", "8"},
                {"noise_std", "0.3"},
                {"m2", "2"},
                {"teacher_gain", "3"},
                {"tol", "0.1125"},
                {"train_lr", "0.2"},
                {"train_budget", "20000"},
                {"restarts", "3"},
                {"holdout_factor", "10"}});
      break;
    case Kind::Distill:
      s.insert({{"sigma2_grid", "0,0.01,0.05,0.1"},
                {"swap_grid", "0,0.1,0.2"},
                {"distill_seeds", "3"},
                {"epochs", "200"},
                {"student_lr", "0.05"},
                {"student_batch", "16"},
                {"resample", "true"},
                {"teacher_dims", "2,16,16,4"},
                {"teacher_inputs", "512"},
                {"teacher_lr", "0.2"},
                {"teacher_batch", "16"},
                {"teacher_loss", "0.0001"},
                {"teacher_max_epochs", "3000"}});
      break;
  }
  return s;
}

Sampling to_sampling(const std::string& raw) {
  const std::string s = trim(raw);
  if (s == "with_replacement") return Sampling::WithReplacement;
  if (s == "without_replacement") return Sampling::WithoutReplacementPerBatch;
  config_error("sgd.sampling: expected with_replacement or without_replacement, got '" + raw + "'");
}

void fill(ExperimentConfig& c) {
  const auto& ds = c.resolved.at("dataset");
  const auto& sg = c.resolved.at("sgd");
  const auto& sd = c.resolved.at("seeds");
  const auto& ex = c.resolved.at("experiment");

  c.dataset.n = to_size("dataset.n", ds.at("n"));
  c.dataset.d = to_size("dataset.d", ds.at("d"));
  c.dataset.sigma2 = to_double("dataset.sigma2", ds.at("sigma2"));
  const std::size_t d = c.dataset.d;
  if (d == 0) config_error("dataset.d must be positive");
  const auto cov = to_doubles("dataset.cov", ds.at("cov"));
  if (cov.size() != d * d)
    config_error("dataset.cov: expected " + std::to_string(d * d) + " entries (row-major d x d)");
  c.dataset.cov.resize(d, d);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) c.dataset.cov(i, j) = cov[i * d + j];
  if (!is_symmetric(c.dataset.cov)) config_error("dataset.cov is not symmetric");
  const auto beta = to_doubles("dataset.beta_star", ds.at("beta_star"));
  if (beta.size() != d) config_error("dataset.beta_star: expected " + std::to_string(d) + " entries");
  c.dataset.beta_star = Eigen::Map<const Vector>(beta.data(), static_cast<Eigen::Index>(d));
  if (c.dataset.sigma2 < 0.0) config_error("dataset.sigma2 must be >= 0");

  c.sgd.eta = to_double("sgd.eta", sg.at("eta"));
  c.sgd.batch = to_size("sgd.batch", sg.at("batch"));
  c.sgd.iterations = to_size("sgd.iterations", sg.at("iterations"));
  c.sgd.sampling = to_sampling(sg.at("sampling"));
  c.sgd.record_every = to_size("sgd.record_every", sg.at("record_every"));
  if (c.sgd.eta < 0.0) config_error("sgd.eta must be >= 0");
  if (c.sgd.batch == 0 || c.sgd.batch > c.dataset.n) config_error("sgd.batch must lie in [1, dataset.n]");
  if (c.sgd.record_every == 0) config_error("sgd.record_every must be positive");

  c.seeds.base_seed = to_u64("seeds.base_seed", sd.at("base_seed"));
  c.seeds.replicas = to_size("seeds.replicas", sd.at("replicas"));
  if (c.seeds.replicas == 0) config_error("seeds.replicas must be positive");

  auto get = [&](const char* key) -> const std::string& { return ex.at(key); };
  auto name = [](const char* key) { return std::string("experiment.") + key; };
  switch (c.kind) {
    case Kind::Simulate:
      c.sigma2_grid = to_doubles(name("sigma2_grid"), get("sigma2_grid"));
      c.write_dataset = to_bool(name("write_dataset"), get("write_dataset"));
      for (double s : c.sigma2_grid)
        if (s < 0.0) config_error("experiment.sigma2_grid entries must be >= 0");
      [[fallthrough]];
    case Kind::DsmCompare:
      c.burn_in = to_double(name("burn_in"), get("burn_in"));
      break;
    case Kind::Stationary:
      c.burn_in = to_double(name("burn_in"), get("burn_in"));
      c.n_batches = to_size(name("n_batches"), get("n_batches"));
      c.ou_times = to_doubles(name("ou_times"), get("ou_times"));
      for (double t : c.ou_times)
        if (t < 0.0) config_error("experiment.ou_times entries must be >= 0");
      if (c.n_batches < 2) config_error("experiment.n_batches must be >= 2");
      break;
    case Kind::ApproxOrder:
      c.eta_list = to_doubles(name("eta_list"), get("eta_list"));
      c.horizon = to_double(name("horizon"), get("horizon"));
      c.order_replicas = to_size(name("order_replicas"), get("order_replicas"));
      c.sde_eta = to_double(name("sde_eta"), get("sde_eta"));
      c.tied = to_bool(name("tied"), get("tied"));
      c.ref_divisor = to_size(name("ref_divisor"), get("ref_divisor"));
      if (c.eta_list.size() < 2) config_error("experiment.eta_list needs at least two step sizes");
      for (double e : c.eta_list)
        if (e <= 0.0) config_error("experiment.eta_list entries must be positive");
      if (c.horizon <= 0.0) config_error("experiment.horizon must be positive");
      if (c.order_replicas < 2) config_error("experiment.order_replicas must be >= 2");
      if (c.ref_divisor == 0) config_error("experiment.ref_divisor must be positive");
      break;
    case Kind::Bounds:
      c.trials = to_size(name("trials"), get("trials"));
      c.delta_conf = to_double(name("delta_conf"), get("delta_conf"));
      c.train_n = to_size(name("train_n"), get("train_n"));
      c.hidden = to_size(name("hidden"), get("hidden"));
      c.noise_std = to_double(name("noise_std"), get("noise_std"));
      c.m2 = to_double(name("m2"), get("m2"));
      c.teacher_gain = to_double(name("teacher_gain"), get("teacher_gain"));
      c.tol = to_double(name("tol"), get("tol"));
      c.train_lr = to_double(name("train_lr"), get("train_lr"));
      c.train_budget = to_size(name("train_budget"), get("train_budget"));
      c.restarts = to_size(name("restarts"), get("restarts"));
      c.holdout_factor = to_size(name("holdout_factor"), get("holdout_factor"));
      if (c.trials == 0 || c.train_n == 0 || c.hidden == 0) config_error("experiment.trials, train_n and hidden must be positive");
      if (c.noise_std < 0.0 || c.m2 <= 0.0 || c.tol < 0.0)
        config_error("experiment.noise_std and tol must be >= 0 and m2 > 0");
      if (c.restarts == 0 || c.holdout_factor == 0) config_error("experiment.restarts and holdout_factor must be positive");
      break;
    case Kind::Distill:
      c.sigma2_grid = to_doubles(name("sigma2_grid"), get("sigma2_grid"));
      c.swap_grid = to_doubles(name("swap_grid"), get("swap_grid"));
      c.distill_seeds = to_size(name("distill_seeds"), get("distill_seeds"));
      c.epochs = to_size(name("epochs"), get("epochs"));
      c.student_lr = to_double(name("student_lr"), get("student_lr"));
      c.student_batch = to_size(name("student_batch"), get("student_batch"));
      c.resample = to_bool(name("resample"), get("resample"));
      c.teacher_dims = to_sizes(name("teacher_dims"), get("teacher_dims"));
      c.teacher_inputs = to_size(name("teacher_inputs"), get("teacher_inputs"));
      c.teacher_lr = to_double(name("teacher_lr"), get("teacher_lr"));
      c.teacher_batch = to_size(name("teacher_batch"), get("teacher_batch"));
      c.teacher_loss = to_double(name("teacher_loss"), get("teacher_loss"));
      c.teacher_max_epochs = to_size(name("teacher_max_epochs"), get("teacher_max_epochs"));
      if (c.sigma2_grid.empty() || c.swap_grid.empty()) config_error("experiment.sigma2_grid and swap_grid must be non-empty");
      for (double s : c.sigma2_grid)
        if (s < 0.0) config_error("experiment.sigma2_grid entries must be >= 0");
      for (double p : c.swap_grid)
        if (p < 0.0 || p > 1.0) config_error("experiment.swap_grid entries must lie in [0, 1]");
      if (c.teacher_dims.size() < 2) config_error("experiment.teacher_dims needs at least input and output sizes");
      for (auto w : c.teacher_dims)
        if (w == 0) config_error("experiment.teacher_dims entries must be positive");
      if (c.distill_seeds == 0 || c.epochs == 0 || c.student_batch == 0 || c.teacher_batch == 0)
        config_error("experiment.distill_seeds, epochs and batch sizes must be positive");
      if (c.student_batch > c.teacher_inputs || c.teacher_batch > c.teacher_inputs)
        config_error("experiment batch sizes cannot exceed teacher_inputs");
      break;
  }
  if (c.kind == Kind::Simulate || c.kind == Kind::Stationary || c.kind == Kind::DsmCompare) {
    if (!(c.burn_in >= 0.0 && c.burn_in < 1.0)) config_error("experiment.burn_in must lie in [0, 1)");
  }
}

}  // namespace

Kind parse_kind(const std::string& name) {
  if (name == "simulate") return Kind::Simulate;
  if (name == "dsm-compare") return Kind::DsmCompare;
  if (name == "stationary") return Kind::Stationary;
  if (name == "approx-order") return Kind::ApproxOrder;
  if (name == "bounds") return Kind::Bounds;
  if (name == "distill") return Kind::Distill;
  config_error("unknown experiment kind '" + name + "'");
}

std::string kind_name(Kind k) {
  switch (k) {
    case Kind::Simulate:
      return "simulate";
    case Kind::DsmCompare:
      return "dsm-compare";
    case Kind::Stationary:
      return "stationary";
    case Kind::ApproxOrder:
      return "approx-order";
    case Kind::Bounds:
      return "bounds";
    case Kind::Distill:
      return "distill";
  }
  return "unknown";
}

ResolvedConfig default_config(Kind kind) {
  ResolvedConfig c;
  c["dataset"] = {{"n", "100"}, {"d", "2"}, {"cov", "20,0,0,20"}, {"beta_star", "1,1"}, {"sigma2", "0.5"}};
  c["sgd"] = {{"eta", "0.01"},
              {"batch", "5"},
              {"iterations", "1000000"},
              {"sampling", "with_replacement"},
              {"record_every", "10"}};
  c["experiment"] = experiment_defaults(kind);
  c["seeds"] = {{"base_seed", "20240611"}, {"replicas", "1"}};
  return c;
}

ExperimentConfig parse_config_text(const std::string& text, Kind kind) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    std::istringstream is(text);
    pt::read_ini(is, tree);
  } catch (const pt::ini_parser_error& e) {
    config_error(std::string("malformed config: ") + e.message() + " (line " + std::to_string(e.line()) + ")");
  }

  ExperimentConfig c;
  c.kind = kind;
  c.resolved = default_config(kind);
  for (const auto& [section, body] : tree) {
    auto it = c.resolved.find(section);
    if (it == c.resolved.end()) config_error("unknown section or top-level key '" + section + "'");
    if (!body.data().empty()) config_error("key '" + section + "' appears outside any section");
    for (const auto& [key, value] : body) {
      auto kit = it->second.find(key);
      if (kit == it->second.end())
        config_error("unknown key '" + key + "' in [" + section + "] for kind " + kind_name(kind));
      kit->second = trim(value.data());
    }
  }
  if (parse_kind(c.resolved["experiment"]["kind"]) != kind)
    config_error("config kind '" + c.resolved["experiment"]["kind"] + "' does not match subcommand " +
                 kind_name(kind));
  fill(c);
  return c;
}

ExperimentConfig parse_config_file(const std::string& path, Kind kind) {
  std::ifstream in(path);
  if (!in) config_error("cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), kind);
}

std::string to_ini(const ResolvedConfig& cfg) {
  std::ostringstream os;
  bool first = true;
  for (const auto& [section, keys] : cfg) {
    if (!first) os << '\n';
    first = false;
    os << '[' << section << "]\n";
    for (const auto& [k, v] : keys) os << k << " = " << v << '\n';
  }
  return os.str();
}

}  // namespace uln::cli
