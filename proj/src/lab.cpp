#include "smallball/lab.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include "smallball/errors.hpp"
#include "smallball/nystrom.hpp"
#include "smallball/tensor_spectrum.hpp"

namespace sbl::lab {
namespace {

[[noreturn]] void fail(const std::string& pointer, const std::string& what) {
  throw ConfigError(pointer.empty() ? "/" : pointer, what);
}

void check_keys(const json& obj, const std::string& pointer,
                std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) fail(pointer, "expected an object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || it.key() == a;
    if (!ok) fail(pointer + "/" + it.key(), "unknown key");
  }
}

double number(const json& obj, const char* key, const std::string& pointer,
              std::optional<double> fallback = std::nullopt) {
  const std::string p = pointer + "/" + key;
  if (!obj.contains(key)) {
    if (fallback) return *fallback;
    fail(p, "required number is missing");
  }
  const json& v = obj.at(key);
  if (!v.is_number()) fail(p, "expected a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) fail(p, "expected a finite number");
  return x;
}

std::int64_t integer(const json& obj, const char* key, const std::string& pointer,
                     std::optional<std::int64_t> fallback = std::nullopt) {
  const std::string p = pointer + "/" + key;
  if (!obj.contains(key)) {
    if (fallback) return *fallback;
    fail(p, "required integer is missing");
  }
  const json& v = obj.at(key);
  if (!v.is_number_integer()) fail(p, "expected an integer");
  return v.get<std::int64_t>();
}

std::vector<double> numbers(const json& obj, const char* key, const std::string& pointer) {
  const std::string p = pointer + "/" + key;
  if (!obj.contains(key)) fail(p, "required array is missing");
  const json& v = obj.at(key);
  if (!v.is_array()) fail(p, "expected an array of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_number()) fail(p + "/" + std::to_string(i), "expected a number");
    out.push_back(v[i].get<double>());
  }
  return out;
}

std::string text(const json& obj, const char* key, const std::string& pointer) {
  const std::string p = pointer + "/" + key;
  if (!obj.contains(key) || !obj.at(key).is_string()) fail(p, "expected a string");
  return obj.at(key).get<std::string>();
}

// Runs a library validation and maps its error onto the config pointer.
template <class F>
auto guarded(const std::string& pointer, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    fail(pointer, e.what());
  }
}

HomogeneousKernelParams parse_kernel(const json& obj, const std::string& pointer) {
  HomogeneousKernelParams k{number(obj, "a", pointer), number(obj, "b", pointer)};
  guarded(pointer, [&] { k.validate(); });
  return k;
}

SelfSimilarMeasure parse_measure(const json& obj, const std::string& pointer) {
  SelfSimilarMeasure mu;
  mu.M = static_cast<int>(integer(obj, "M", pointer));
  mu.m = static_cast<int>(integer(obj, "m", pointer));
  mu.delta = number(obj, "delta", pointer);
  mu.breakpoints = numbers(obj, "breakpoints", pointer);
  mu.levels = numbers(obj, "levels", pointer);
  guarded(pointer, [&] { mu.validate(); });
  return mu;
}

SvfExpr parse_tail(const json& obj, const std::string& pointer) {
  SvfExpr t;
  if (!obj.contains("tail")) return t;
  const json& j = obj.at("tail");
  const std::string p = pointer + "/tail";
  check_keys(j, p, {"scale", "loglog_power", "logloglog_power"});
  t.scale = number(j, "scale", p, 1.0);
  t.loglog_power = number(j, "loglog_power", p, 0.0);
  t.logloglog_power = number(j, "logloglog_power", p, 0.0);
  return guarded(p, [&] { return validated(t); });
}

int order_field(const json& obj, const std::string& pointer) {
  const auto d = integer(obj, "d", pointer);
  if (d < 1 || d > 8) fail(pointer + "/d", "d must lie in [1, 8]");
  return static_cast<int>(d);
}

std::vector<double> positive_list(const json& obj, const char* key, const std::string& pointer) {
  std::vector<double> v = numbers(obj, key, pointer);
  if (v.empty()) fail(pointer + "/" + key, "must not be empty");
  return v;
}

std::int64_t line_of(const std::string& text, std::size_t byte) {
  const std::size_t end = std::min(byte, text.size());
  return 1 + std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(end), '\n');
}

const std::set<std::string> kMethods = {"saddle",  "mc",         "integral",
                                        "formula", "exact-counting", "asym-counting"};

}  // namespace

AsymptoticFormula parse_formula(const json& f, const std::string& p) {
  if (!f.is_object()) fail(p, "expected an object");
  const std::string variant = text(f, "variant", p);
  AsymptoticFormula out;
  if (variant == "log-type") {
    check_keys(f, p, {"variant", "alpha", "tail"});
    out = formula::LogType{number(f, "alpha", p), parse_tail(f, p)};
  } else if (variant == "exp-type") {
    check_keys(f, p, {"variant", "a", "p", "alpha", "tail"});
    out = formula::ExpType{number(f, "a", p), number(f, "p", p), number(f, "alpha", p, 0.0),
                            parse_tail(f, p)};
  } else if (variant == "stationary-logpow") {
    check_keys(f, p, {"variant", "p", "C"});
    out = formula::StationaryLogPow{number(f, "p", p), positive_list(f, "C", p)};
  } else if (variant == "stationary-powlog") {
    check_keys(f, p, {"variant", "q", "p", "C"});
    out = formula::StationaryPowLog{number(f, "q", p), number(f, "p", p), positive_list(f, "C", p)};
  } else if (variant == "stationary-linear") {
    check_keys(f, p, {"variant", "C"});
    out = formula::StationaryLinear{positive_list(f, "C", p)};
  } else if (variant == "stationary-linlog") {
    check_keys(f, p, {"variant", "p", "d"});
    out = formula::StationaryLinLog{number(f, "p", p), order_field(f, p)};
  } else if (variant == "stationary-polygrowth") {
    check_keys(f, p, {"variant", "q", "d"});
    out = formula::StationaryPolyGrowth{number(f, "q", p), order_field(f, p)};
  } else if (variant == "stationary-superpoly") {
    check_keys(f, p, {"variant", "d"});
    out = formula::StationarySuperPoly{order_field(f, p)};
  } else if (variant == "homogeneous") {
    check_keys(f, p, {"variant", "kernels"});
    if (!f.contains("kernels") || !f["kernels"].is_array() || f["kernels"].empty()) {
      fail(p + "/kernels", "expected a nonempty array of {a, b}");
    }
    formula::Homogeneous h;
    for (std::size_t i = 0; i < f["kernels"].size(); ++i) {
      h.kernels.push_back(parse_kernel(f["kernels"][i], p + "/kernels/" + std::to_string(i)));
    }
    out = h;
  } else if (variant == "selfsimilar" || variant == "selfsimilar-integrated") {
    const bool integrated = variant == "selfsimilar-integrated";
    if (integrated) {
      check_keys(f, p, {"variant", "measures", "smoothness"});
    } else {
      check_keys(f, p, {"variant", "measures"});
    }
    if (!f.contains("measures") || !f["measures"].is_array() || f["measures"].empty()) {
      fail(p + "/measures", "expected a nonempty array of measures");
    }
    std::vector<SelfSimilarMeasure> ms;
    for (std::size_t i = 0; i < f["measures"].size(); ++i) {
      ms.push_back(parse_measure(f["measures"][i], p + "/measures/" + std::to_string(i)));
    }
    if (integrated) {
      out = formula::SelfSimilarIntegrated{ms, static_cast<int>(integer(f, "smoothness", p))};
    } else {
      out = formula::SelfSimilar{ms};
    }
  } else if (variant == "mixed") {
    check_keys(f, p, {"variant", "a", "b"});
    out = formula::Mixed{parse_kernel(f, p)};
  } else {
    fail(p + "/variant", "unknown formula variant '" + variant + "'");
  }
  guarded(p, [&] { validate_formula(out); });
  return out;
}

MarginalSpec build_marginal(const json& m, std::int64_t n_max) {
  const std::string p = m.value("_pointer", std::string("/marginals"));
  const std::string kind = text(m, "kind", p);
  auto with = [&](std::initializer_list<const char*> keys) {
    std::vector<const char*> all{"kind", "_pointer"};
    all.insert(all.end(), keys.begin(), keys.end());
    for (auto it = m.begin(); it != m.end(); ++it) {
      if (std::none_of(all.begin(), all.end(), [&](const char* a) { return it.key() == a; })) {
        fail(p + "/" + it.key(), "unknown key for marginal kind '" + kind + "'");
      }
    }
  };
  return guarded(p, [&]() -> MarginalSpec {
    if (kind == "wiener" || kind == "bridge") {
      with({});
      return {closed_form_eigs(kind == "wiener" ? ClosedFormProcess::wiener
                                                : ClosedFormProcess::bridge,
                               n_max),
              std::nullopt};
    }
    if (kind == "geometric") {
      with({"log_first", "log_decay"});
      const double lf = number(m, "log_first", p, 0.0);
      const double ld = number(m, "log_decay", p);
      return {geometric_eigs(lf, ld, n_max), SvfExpr::log_power_of(1.0, 1.0 / ld)};
    }
    if (kind == "explicit") {
      with({"values"});
      std::vector<double> v = numbers(m, "values", p);
      auto seq = EigenSequence::from_values("explicit", v);
      seq.check_invariants();
      return {seq, std::nullopt};
    }
    if (kind == "widom") {
      with({"symbol", "C", "p", "q"});
      const std::string symbol = text(m, "symbol", p);
      SpectralExponent G;
      MarginalFamily fam;
      if (symbol == "logpow") {
        const double C = number(m, "C", p);
        const double pw = number(m, "p", p);
        G = {[C, pw](double x) { return C * std::pow(std::log(x), pw); },
             SymbolRegime::subexponential, "C ln^p"};
        fam = family::StationaryLogPow{C, pw};
      } else if (symbol == "powlog") {
        const double C = number(m, "C", p);
        const double q = number(m, "q", p);
        const double pw = number(m, "p", p);
        if (!(q > 0.0 && q < 1.0)) fail(p + "/q", "powlog symbols need 0 < q < 1");
        G = {[C, q, pw](double x) { return C * std::pow(x, q) * std::pow(std::log(x), pw); },
             SymbolRegime::subexponential, "C xi^q ln^p"};
        fam = family::StationaryPowLog{q, C, pw};
      } else if (symbol == "power") {
        const double C = number(m, "C", p, 1.0);
        const double q = number(m, "q", p);
        if (!(q > 1.0)) fail(p + "/q", "power symbols need q > 1");
        G = {[C, q](double x) { return C * std::pow(x, q); }, SymbolRegime::superlinear_convex,
             "C xi^q"};
        fam = family::StationaryPolyGrowth{q};
      } else if (symbol == "lngamma") {
        G = {[](double x) { return std::lgamma(x); }, SymbolRegime::superlinear_convex,
             "ln Gamma"};
        fam = family::StationaryLinLog{1.0, 1.0};
      } else {
        fail(p + "/symbol", "unknown symbol '" + symbol + "' (logpow, powlog, power, lngamma)");
      }
      validate_regime(G);
      const SvfExpr phi = marginal_counting_asym(fam);
      return {widom_eigs(G, n_max, phi), phi};
    }
    if (kind == "homogeneous") {
      with({"a", "b", "grid", "x_max"});
      const HomogeneousKernelParams k = parse_kernel(m, p);
      const auto grid = integer(m, "grid", p, 4000);
      const double x_max = number(m, "x_max", p, 100.0);
      if (grid < 2 || grid > 20000) fail(p + "/grid", "grid must lie in [2, 20000]");
      if (!(x_max > 0.0)) fail(p + "/x_max", "x_max must be > 0");
      const SvfExpr phi = marginal_counting_asym(family::Homogeneous{k});
      const Quadrature quad = log_graded_grid(x_max, static_cast<int>(grid));
      std::vector<double> eigs = k.a == 1.0 ? homogeneous_accurate_eigs(k, quad)
                                            : nystrom_eigs(homogeneous_kernel(k), quad);
      while (!eigs.empty() && !(eigs.back() > 0.0)) eigs.pop_back();
      return {EigenSequence::from_values("homogeneous", eigs, phi), phi};
    }
    if (kind == "selfsimilar") {
      with({"M", "m", "delta", "breakpoints", "levels", "depth", "smoothness"});
      const SelfSimilarMeasure mu = parse_measure(m, p);
      const auto depth = integer(m, "depth", p, 12);
      if (depth < 1 || depth > 60) fail(p + "/depth", "depth must lie in [1, 60]");
      if (m.contains("smoothness") && integer(m, "smoothness", p) != 0) {
        fail(p + "/smoothness", "only the Brownian kernel (smoothness 0) has a Nystrom backend");
      }
      const SvfExpr phi = marginal_counting_asym(family::SelfSimilar{mu});
      std::vector<double> eigs = nystrom_eigs(
          wiener_kernel, atom_quadrature(self_similar_atoms(mu, static_cast<int>(depth))));
      while (!eigs.empty() && !(eigs.back() > 0.0)) eigs.pop_back();
      return {EigenSequence::from_values("selfsimilar", eigs, phi), phi};
    }
    fail(p + "/kind", "unknown marginal kind '" + kind + "'");
  });
}

bool ExperimentConfig::wants(const std::string& method) const {
  return std::find(methods.begin(), methods.end(), method) != methods.end();
}

namespace {

std::vector<double> decreasing_grid(const json& doc, const char* key, bool below_one) {
  std::vector<double> g;
  if (!doc.contains(key)) return g;
  g = numbers(doc, key, "");
  for (std::size_t i = 0; i < g.size(); ++i) {
    const std::string p = std::string("/") + key + "/" + std::to_string(i);
    if (!(g[i] > 0.0) || (below_one && !(g[i] < 1.0))) {
      fail(p, below_one ? "grid values must lie in (0, 1)" : "grid values must be > 0");
    }
    if (i > 0 && !(g[i] < g[i - 1])) fail(p, "grid must be strictly decreasing");
  }
  return g;
}

std::optional<SvfExpr> tensor_counting(const std::vector<MarginalSpec>& specs) {
  std::vector<SvfExpr> phis;
  for (const MarginalSpec& s : specs) {
    if (!s.counting) return std::nullopt;
    phis.push_back(*s.counting);
  }
  return tensor_counting_asym(phis);
}

// Marginals are checked with a short truncation: it exercises every
// parameter check without paying for long spectra.
std::vector<MarginalSpec> probe_marginals(const ExperimentConfig& c) {
  std::vector<MarginalSpec> out;
  for (const json& m : c.marginals) {
    const std::string kind = m.value("kind", "");
    json light = m;
    if (kind == "homogeneous") light["grid"] = 64;  // parameter checks only
    out.push_back(build_marginal(light, 16));
  }
  return out;
}

}  // namespace

ExperimentConfig parse_config(const std::string& src) {
  json doc;
  try {
    doc = json::parse(src);
  } catch (const json::parse_error& e) {
    throw ConfigError("line " + std::to_string(line_of(src, e.byte)), "malformed JSON");
  }
  check_keys(doc, "",
             {"name", "marginals", "tensor_order", "epsilon_grid", "t_grid", "methods",
              "mc_samples", "seed", "formula", "eta", "truncation_n", "factor_n", "output_dir"});
  ExperimentConfig c;
  c.raw = doc;
  if (doc.contains("name") && !doc["name"].is_string()) fail("/name", "expected a string");
  c.name = doc.value("name", std::string("experiment"));
  if (doc.contains("output_dir")) c.output_dir = text(doc, "output_dir", "");

  if (!doc.contains("marginals") || !doc["marginals"].is_array() || doc["marginals"].empty()) {
    fail("/marginals", "expected a nonempty array of marginal descriptors");
  }
  const auto& ms = doc["marginals"];
  const auto order = integer(doc, "tensor_order", "", static_cast<std::int64_t>(ms.size()));
  if (order < 1 || order > 8) fail("/tensor_order", "tensor_order must lie in [1, 8]");
  if (ms.size() != 1 && static_cast<std::int64_t>(ms.size()) != order) {
    fail("/tensor_order", "must equal the number of marginals (or give a single marginal)");
  }
  c.tensor_order = static_cast<int>(order);
  for (int j = 0; j < c.tensor_order; ++j) {
    const std::size_t src_index = ms.size() == 1 ? 0 : static_cast<std::size_t>(j);
    json m = ms[src_index];
    if (!m.is_object()) fail("/marginals/" + std::to_string(src_index), "expected an object");
    m["_pointer"] = "/marginals/" + std::to_string(src_index);
    c.marginals.push_back(m);
  }

  c.epsilon_grid = decreasing_grid(doc, "epsilon_grid", true);
  c.t_grid = decreasing_grid(doc, "t_grid", false);

  if (!doc.contains("methods") || !doc["methods"].is_array() || doc["methods"].empty()) {
    fail("/methods", "expected a nonempty array of methods");
  }
  for (std::size_t i = 0; i < doc["methods"].size(); ++i) {
    const json& v = doc["methods"][i];
    const std::string p = "/methods/" + std::to_string(i);
    if (!v.is_string() || !kMethods.count(v.get<std::string>())) {
      fail(p, "unknown method (saddle, mc, integral, formula, exact-counting, asym-counting)");
    }
    if (c.wants(v.get<std::string>())) fail(p, "duplicate method");
    c.methods.push_back(v.get<std::string>());
  }

  c.mc_samples = integer(doc, "mc_samples", "", 100000);
  if (c.mc_samples < 1000) fail("/mc_samples", "mc_samples must be >= 1000");
  if (doc.contains("seed")) {
    if (!doc["seed"].is_number_unsigned()) fail("/seed", "expected a nonnegative integer");
    c.seed = doc["seed"].get<std::uint64_t>();
  }
  c.eta = number(doc, "eta", "", 1e-3);
  if (!(c.eta > 0.0)) fail("/eta", "eta must be > 0");
  c.truncation_n = integer(doc, "truncation_n", "", 100000);
  if (c.truncation_n < 2 || c.truncation_n > 50000000) {
    fail("/truncation_n", "truncation_n must lie in [2, 5e7]");
  }
  c.factor_n = integer(doc, "factor_n", "", 0);
  if (c.factor_n < 0 || (c.factor_n > 0 && c.factor_n < 2)) {
    fail("/factor_n", "factor_n must be >= 2 (or 0 for the default)");
  }
  if (doc.contains("formula")) c.formula = parse_formula(doc["formula"], "/formula");

  const bool eps_methods = c.wants("saddle") || c.wants("mc") || c.wants("integral") ||
                           c.wants("formula");
  const bool t_methods = c.wants("exact-counting") || c.wants("asym-counting");
  if (eps_methods && c.epsilon_grid.empty()) {
    fail("/epsilon_grid", "required by the saddle, mc, integral and formula methods");
  }
  if (t_methods && c.t_grid.empty()) {
    fail("/t_grid", "required by the counting methods");
  }

  const std::vector<MarginalSpec> probe = probe_marginals(c);
  std::optional<SvfExpr> phi;
  try {
    phi = tensor_counting(probe);
  } catch (const Error& e) {
    fail("/marginals", std::string("counting asymptotics do not combine: ") + e.what());
  }
  const bool needs_phi =
      c.wants("integral") || c.wants("asym-counting") || (c.wants("formula") && !c.formula);
  if (needs_phi && !phi) {
    fail("/methods", "integral, asym-counting and formula (without a 'formula' block) need "
                     "marginals with a slowly varying counting function");
  }
  for (std::size_t i = 0; i < c.epsilon_grid.size(); ++i) {
    const double L = -std::log(c.epsilon_grid[i]);
    const std::string p = "/epsilon_grid/" + std::to_string(i);
    if (c.wants("formula")) {
      guarded(p, [&] {
        return c.formula ? formula_catalog(*c.formula, L) : formula_from_counting(*phi, L);
      });
    }
  }
  for (std::size_t i = 0; i < c.t_grid.size(); ++i) {
    if (c.wants("asym-counting") && !(-std::log(c.t_grid[i]) >= log_tau_min(*phi))) {
      fail("/t_grid/" + std::to_string(i), "below the domain of the counting asymptotic");
    }
  }
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(path, "cannot open config file");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

namespace {

using Clock = std::chrono::steady_clock;

struct Spectrum {
  ChiSquareSum full;
  ChiSquareSum half;
  std::int64_t N = 0;
};

std::string grid_label(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

ChiSquareSum prefix(const std::vector<double>& w, std::int64_t n, double trace) {
  ChiSquareSum s;
  s.weights.assign(w.begin(), w.begin() + n);
  s.tail_correction = std::max(trace - s.mean(), 0.0);
  return s;
}

double least_squares_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i] / n;
    my += y[i] / n;
  }
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  return sxx > 0.0 ? sxy / sxx : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace

RunOutput run_experiment(const ExperimentConfig& c) {
  const int d = c.tensor_order;
  // Factors of a product need room beyond K for the top-K certificate.
  const std::int64_t factor_n =
      d == 1 ? c.truncation_n : (c.factor_n > 0 ? c.factor_n : 2 * c.truncation_n + 1);
  std::vector<MarginalSpec> specs;
  for (const json& m : c.marginals) specs.push_back(build_marginal(m, factor_n));
  TensorSpec tensor;
  for (const MarginalSpec& s : specs) tensor.factors.push_back(s.sequence);
  const std::optional<SvfExpr> phi = tensor_counting(specs);

  std::map<std::string, double> timing;
  std::vector<ResultRow> rows;
  auto timed = [&](const std::string& method, auto&& f) {
    const auto t0 = Clock::now();
    f();
    timing[method] += std::chrono::duration<double>(Clock::now() - t0).count();
  };

  // Product spectrum for d >= 2, built on first use.
  std::optional<std::vector<double>> products;
  double trace = 1.0;
  for (const MarginalSpec& s : specs) trace *= s.sequence.tail_bound(0);
  auto product_weights = [&](double eps) -> const std::vector<double>& {
    if (!products) {
      try {
        const auto top = top_k_products(tensor, c.truncation_n);
        products.emplace();
        for (const TensorProduct& p : top) products->push_back(std::exp(p.log_value));
      } catch (const TruncationExhausted& e) {
        throw TruncationExhausted("epsilon = " + grid_label(eps) + ": " + e.what());
      }
    }
    return *products;
  };

  const bool need_saddle = c.wants("saddle") || c.wants("mc");
  json truncation = json::array();
  for (const double eps : c.epsilon_grid) {
    const double r = eps * eps;
    const double L = -std::log(eps);
    if (need_saddle) {
      SaddleResult sr;
      ChiSquareSum sum;
      std::int64_t N = 0;
      bool certified = false;
      double tail = 0.0;
      double half = 0.0;
      timed("saddle", [&] {
        if (d == 1) {
          const EigenSequence& seq = specs.front().sequence;
          const auto ts = saddle_log_prob_auto(seq, r, c.eta, std::min<std::int64_t>(1024, seq.n_max()));
          sr = ts.result;
          N = ts.N;
          certified = ts.certified;
          tail = seq.tail_bound(N);
          half = ts.ln_p_refined_half;
          if (c.wants("mc")) sum = ChiSquareSum::from_sequence(seq, N);
        } else {
          const std::vector<double>& w = product_weights(eps);
          N = static_cast<std::int64_t>(w.size());
          sum = prefix(w, N, trace);
          sr = saddle_log_prob(sum, r, c.eta);
          tail = sum.tail_correction;
          half = saddle_log_prob(prefix(w, N / 2, trace), r, c.eta).ln_p_refined;
          certified = sr.certified &&
                      std::abs(half - sr.ln_p_refined) < 0.01 * std::abs(sr.ln_p_refined);
        }
      });
      truncation.push_back({{"epsilon", eps}, {"N", N}, {"tail", tail}, {"tail_limit", c.eta * r},
                            {"ln_p_refined", sr.ln_p_refined}, {"ln_p_refined_half_N", half},
                            {"certified", certified}});
      if (c.wants("saddle")) rows.push_back({eps, "saddle", sr.ln_p_refined, sr.residual, N, certified});
      if (c.wants("mc")) {
        timed("mc", [&] {
          const McResult mc = mc_tilted_prob(sum, r, sr.u_star, c.mc_samples, c.seed);
          rows.push_back({eps, "mc", mc.ln_estimate, mc.std_error / mc.estimate, N, certified});
        });
      }
    }
    if (c.wants("integral")) {
      timed("integral", [&] {
        const IntegralAsymptotic ia = integral_log_asymptotic_log(*phi, 2.0 * std::log(eps));
        rows.push_back({eps, "integral", ia.value, ia.residual, 0, true});
      });
    }
    if (c.wants("formula")) {
      timed("formula", [&] {
        const double v = c.formula ? formula_catalog(*c.formula, L) : formula_from_counting(*phi, L);
        rows.push_back({eps, "formula", v, 0.0, 0, true});
      });
    }
  }

  for (const double t : c.t_grid) {
    const double log_t = std::log(t);
    if (c.wants("exact-counting")) {
      timed("exact-counting", [&] {
        std::int64_t n_max = 0;
        for (const MarginalSpec& s : specs) n_max = std::max(n_max, s.sequence.n_max());
        if (d == 1) {
          const EigenSequence& seq = specs.front().sequence;
          std::int64_t lo = 0;
          std::int64_t hi = seq.n_max() + 1;
          while (hi - lo > 1) {
            const std::int64_t mid = lo + (hi - lo) / 2;
            (seq.log_at(mid) > log_t ? lo : hi) = mid;
          }
          const bool cert = seq.complete() || seq.log_at(seq.n_max()) <= log_t;
          rows.push_back({t, "exact-counting", static_cast<double>(lo), 0.0, n_max, cert});
        } else {
          const TensorCount tc = tensor_counting_exact(tensor, log_t, TruncationPolicy::report);
          rows.push_back({t, "exact-counting", static_cast<double>(tc.count), 0.0, n_max,
                          tc.certified});
        }
      });
    }
    if (c.wants("asym-counting")) {
      timed("asym-counting", [&] {
        rows.push_back({t, "asym-counting", std::exp(log_eval_svf_log(*phi, -log_t)), 0.0, 0, true});
      });
    }
  }

  std::sort(rows.begin(), rows.end(), [](const ResultRow& a, const ResultRow& b) {
    if (a.x != b.x) return a.x < b.x;
    return a.method < b.method;
  });

  RunOutput out;
  out.rows = rows;
  json& man = out.manifest;
  man["name"] = c.name;
  json echo = c.raw;
  man["config"] = echo;
  man["versions"] = {
      {"smallball", kVersion},
      {"compiler", __VERSION__},
      {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                    "." + std::to_string(EIGEN_MINOR_VERSION)},
      {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                            std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                            std::to_string(NLOHMANN_JSON_VERSION_PATCH)}};
  man["timings_seconds"] = timing;
  json factors = json::array();
  for (const MarginalSpec& s : specs) {
    factors.push_back({{"name", s.sequence.name()},
                       {"n_max", s.sequence.n_max()},
                       {"counting_asymptotic", s.counting ? to_string(*s.counting) : "none"}});
  }
  man["spectrum"] = {{"tensor_order", d}, {"factors", factors},
                     {"counting_asymptotic", phi ? to_string(*phi) : "none"}};

  json ratios = json::array();
  const std::pair<const char*, const char*> pairs[] = {
      {"formula", "saddle"}, {"integral", "saddle"}, {"integral", "formula"}, {"mc", "saddle"}};
  for (const double eps : c.epsilon_grid) {
    std::map<std::string, double> at;
    for (const ResultRow& row : rows) {
      if (row.x == eps) at[row.method] = row.value;
    }
    for (const auto& [num, den] : pairs) {
      if (at.count(num) && at.count(den)) {
        ratios.push_back({{"epsilon", eps}, {"numerator", num}, {"denominator", den},
                          {"ratio", at[num] / at[den]}});
      }
    }
  }
  man["ratios"] = ratios;
  man["truncation"] = truncation;

  json slopes = json::array();
  for (const char* method : {"exact-counting", "asym-counting"}) {
    std::vector<double> x, y, lx, ly;
    for (const ResultRow& row : rows) {
      if (row.method != method) continue;
      const double L = -std::log(row.x);
      x.push_back(L);
      y.push_back(row.value);
      if (row.value > 0.0 && L > 1.0) {
        lx.push_back(std::log(L));
        ly.push_back(std::log(row.value));
      }
    }
    if (x.size() >= 2) {
      json s = {{"method", method}, {"vs_log_inv_t", least_squares_slope(x, y)}};
      if (lx.size() >= 2) s["log_log"] = least_squares_slope(lx, ly);
      slopes.push_back(s);
    }
  }
  man["slopes"] = slopes;
  return out;
}

std::string format_csv(const std::vector<ResultRow>& rows) {
  std::string out = "epsilon_or_t,method,value,stderr_or_residual,truncation_N,certified\n";
  char buf[256];
  for (const ResultRow& r : rows) {
    std::snprintf(buf, sizeof buf, "%.17g,%s,%.17g,%.17g,%lld,%s\n", r.x, r.method.c_str(),
                  r.value, r.error, static_cast<long long>(r.truncation_n),
                  r.certified ? "yes" : "no");
    out += buf;
  }
  return out;
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(path, "cannot open CSV file");
  CsvTable t;
  std::string line;
  std::int64_t lineno = 0;
  auto split = [](const std::string& s) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ss(s);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!s.empty() && s.back() == ',') cells.emplace_back();
    return cells;
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = split(line);
    if (t.header.empty()) {
      t.header = std::move(cells);
    } else {
      if (cells.size() != t.header.size()) {
        throw ConfigError("line " + std::to_string(lineno), "wrong number of cells");
      }
      t.rows.push_back(std::move(cells));
    }
  }
  if (t.header.empty()) throw ConfigError(path, "empty CSV file");
  return t;
}

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick_label(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

}  // namespace

std::string render_svg(const CsvTable& table, const PlotOptions& o) {
  auto column = [&](const std::string& name) -> std::size_t {
    const auto it = std::find(table.header.begin(), table.header.end(), name);
    if (it == table.header.end()) throw ConfigError(name, "no such column");
    return static_cast<std::size_t>(it - table.header.begin());
  };
  if (o.ys.empty()) throw ConfigError("--y", "no y columns given");
  if (table.rows.empty()) throw ConfigError("csv", "no data rows");
  const std::size_t xi = column(o.x);
  std::vector<std::size_t> yi;
  for (const std::string& y : o.ys) yi.push_back(column(y));
  const std::optional<std::size_t> gi =
      o.group.empty() ? std::nullopt : std::optional<std::size_t>(column(o.group));

  auto parse = [&](const std::string& cell, std::size_t row, bool log_axis) {
    char* end = nullptr;
    const double v = std::strtod(cell.c_str(), &end);
    if (cell.empty() || *end != '\0' || !std::isfinite(v)) {
      throw ConfigError("line " + std::to_string(row + 2), "non-numeric cell '" + cell + "'");
    }
    if (log_axis && !(v > 0.0)) {
      throw ConfigError("line " + std::to_string(row + 2), "log axis needs positive values");
    }
    return log_axis ? std::log10(v) : v;
  };

  // Series keyed by (y column, group value), in sorted order.
  std::map<std::string, std::vector<std::pair<double, double>>> series;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const double x = parse(row[xi], r, o.logx);
    for (std::size_t k = 0; k < yi.size(); ++k) {
      const double y = parse(row[yi[k]], r, o.logy);
      const std::string key = gi ? o.ys[k] + " [" + row[*gi] + "]" : o.ys[k];
      series[key].push_back({x, y});
    }
  }
  double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
  for (auto& [name, pts] : series) {
    std::stable_sort(pts.begin(), pts.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    for (const auto& [x, y] : pts) {
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
    }
  }
  if (x1 == x0) { x0 -= 0.5; x1 += 0.5; }
  if (y1 == y0) { y0 -= 0.5; y1 += 0.5; }

  constexpr double W = 720, H = 440, left = 80, right = 200, top = 20, bottom = 50;
  const double pw = W - left - right;
  const double ph = H - top - bottom;
  auto sx = [&](double x) { return left + (x - x0) / (x1 - x0) * pw; };
  auto sy = [&](double y) { return top + (1.0 - (y - y0) / (y1 - y0)) * ph; };

  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                  "#ff7f0e", "#8c564b", "#e377c2", "#17becf"};
  std::ostringstream svg;
  svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
      << "\" viewBox=\"0 0 " << W << " " << H << "\">\n"
      << "<rect x=\"0\" y=\"0\" width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n"
      << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
      << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double xv = x0 + (x1 - x0) * k / 4.0;
    const double yv = y0 + (y1 - y0) * k / 4.0;
    svg << "<text x=\"" << fmt(sx(xv)) << "\" y=\"" << fmt(H - bottom + 18)
        << "\" font-size=\"11\" text-anchor=\"middle\">"
        << xml_escape(tick_label(o.logx ? std::pow(10.0, xv) : xv)) << "</text>\n";
    svg << "<text x=\"" << fmt(left - 6) << "\" y=\"" << fmt(sy(yv) + 4)
        << "\" font-size=\"11\" text-anchor=\"end\">"
        << xml_escape(tick_label(o.logy ? std::pow(10.0, yv) : yv)) << "</text>\n";
  }
  svg << "<text x=\"" << fmt(left + pw / 2) << "\" y=\"" << fmt(H - 8)
      << "\" font-size=\"12\" text-anchor=\"middle\">" << xml_escape(o.x)
      << (o.logx ? " (log)" : "") << "</text>\n";
  int idx = 0;
  for (const auto& [name, pts] : series) {
    const char* color = palette[idx % 8];
    svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < pts.size(); ++i) {
      svg << (i ? " " : "") << fmt(sx(pts[i].first)) << "," << fmt(sy(pts[i].second));
    }
    svg << "\"/>\n";
    const double ly = top + 14 + 16 * idx;
    svg << "<line x1=\"" << fmt(W - right + 12) << "\" y1=\"" << fmt(ly) << "\" x2=\""
        << fmt(W - right + 32) << "\" y2=\"" << fmt(ly) << "\" stroke=\"" << color
        << "\" stroke-width=\"2\"/>\n";
    svg << "<text x=\"" << fmt(W - right + 38) << "\" y=\"" << fmt(ly + 4)
        << "\" font-size=\"11\">" << xml_escape(name) << (o.logy ? " (log)" : "")
        << "</text>\n";
    ++idx;
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace sbl::lab
