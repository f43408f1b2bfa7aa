// scenario.hpp — config-driven runs behind the command-line tool: parsing the
// scenario JSON, building initial states, executing each subcommand, and
// writing the run directory (trajectory/density CSVs, report JSONs, and a
// manifest with a per-check pass/fail summary).
//
// Error taxonomy (mirrored by the CLI exit codes):
//   * std::invalid_argument / std::domain_error / FamilyError /
//     SupercriticalError / JSON parse errors  -> configuration problem (2)
//   * any other std::exception during a run   -> runtime failure (3)
//   * a completed run with failing checks     -> check failure (1)

#pragma once

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "xck/entropy.hpp"
#include "xck/equilibrium.hpp"
#include "xck/evolve.hpp"
#include "xck/kernel.hpp"
#include "xck/lattice.hpp"
#include "xck/numerics.hpp"
#include "xck/oracles.hpp"

namespace xck {

inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kToolVersion = "0.1.0";

// JSON-safe real: infinities and NaN are not representable as JSON numbers,
// so they are emitted as strings.
inline nlohmann::json json_real(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "nan";
  return v > 0 ? "+infinity" : "-infinity";
}

// ---------------------------------------------------------------------------
// Config model.
// ---------------------------------------------------------------------------

struct InitialSpec {
  enum class Type { kDelta, kTwoPoint, kEquilibrium, kEquilibriumPerturbed,
                    kCsv };
  Type type = Type::kDelta;
  int k = 0;                    // delta site
  double mass = 1.0;            // delta mass
  int k1 = 0, k2 = 0;           // two-point sites
  double w1 = 0.5, w2 = 0.5;    // two-point weights
  double phi = 1.0;             // equilibrium parameter
  double delta = 0.0;           // perturbation size (weighted norm)
  std::filesystem::path csv;    // explicit initial state
};

struct LowerBoundSpec {
  int k0 = 0;
  double t0 = 1.0;
  int l_max = 3;
  Aseq a_seq = Aseq::kGeometric;
};

struct DiagnosticsSpec {
  std::optional<double> entropy_phi;
  std::optional<LowerBoundSpec> lower_bound;
  std::optional<double> ckp_alpha;
  double tol_dissipation = 1e-3;
  double tol_integral = 1e-4;
};

struct StabilitySpec {
  double phi = 1.0;
  std::vector<double> delta_grid;
  std::vector<double> epsilon_grid;
  double t_end = 1.0;
};

struct HeatSpec {
  double t_max = 2.0;
  int samples = 41;
  double f0_at_0 = 1.0;
  double q0_abs = 0.0;
};

struct EquilibriumSpec {
  std::optional<double> phi;
  std::optional<double> charge;
};

struct ScenarioConfig {
  int schema_version = kSchemaVersion;
  std::optional<Kernel> kernel;
  nlohmann::json kernel_json;
  std::optional<int> window;
  std::optional<InitialSpec> initial;
  IntegratorConfig integrator;
  DiagnosticsSpec diagnostics;
  std::optional<StabilitySpec> stability;
  std::optional<HeatSpec> heat;
  std::optional<EquilibriumSpec> equilibrium;
  int probe_window = 32;  // validate-kernel half-width

  static ScenarioConfig parse_file(const std::filesystem::path& path);
  static ScenarioConfig parse(const nlohmann::json& j,
                              const std::filesystem::path& base_dir);

  const Kernel& need_kernel() const {
    if (!kernel) throw std::invalid_argument("config is missing a kernel");
    return *kernel;
  }
  int need_window() const {
    if (!window) throw std::invalid_argument("config is missing a window");
    return *window;
  }
  const InitialSpec& need_initial() const {
    if (!initial) {
      throw std::invalid_argument("config is missing an initial state");
    }
    return *initial;
  }
};

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& j,
                                std::initializer_list<const char*> allowed,
                                const char* where) {
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* key : allowed) {
      if (item.key() == key) {
        known = true;
        break;
      }
    }
    if (!known) {
      throw std::invalid_argument(std::string("unknown key \"") + item.key() +
                                  "\" in " + where);
    }
  }
}

inline double get_real(const nlohmann::json& j, const char* key,
                       double fallback) {
  return j.contains(key) ? j.at(key).get<double>() : fallback;
}

inline int get_int(const nlohmann::json& j, const char* key, int fallback) {
  return j.contains(key) ? j.at(key).get<int>() : fallback;
}

}  // namespace detail

inline ScenarioConfig ScenarioConfig::parse(
    const nlohmann::json& j, const std::filesystem::path& base_dir) {
  if (!j.is_object()) {
    throw std::invalid_argument("config root must be a JSON object");
  }
  detail::reject_unknown_keys(
      j,
      {"schema_version", "kernel", "window", "initial", "integrator",
       "diagnostics", "stability", "heat", "equilibrium", "probe_window"},
      "config");
  if (!j.contains("schema_version")) {
    throw std::invalid_argument("config is missing schema_version");
  }
  ScenarioConfig cfg;
  cfg.schema_version = j.at("schema_version").get<int>();
  if (cfg.schema_version != kSchemaVersion) {
    throw std::invalid_argument("unsupported schema_version " +
                                std::to_string(cfg.schema_version));
  }

  if (j.contains("kernel")) {
    cfg.kernel_json = j.at("kernel");
    cfg.kernel = Kernel::from_json(cfg.kernel_json);
  }
  if (j.contains("window")) {
    cfg.window = j.at("window").get<int>();
    if (*cfg.window < 1) {
      throw std::invalid_argument("window must be >= 1");
    }
  }
  cfg.probe_window = detail::get_int(j, "probe_window", 32);
  if (cfg.probe_window < 4) {
    throw std::invalid_argument("probe_window must be >= 4");
  }

  if (j.contains("initial")) {
    const nlohmann::json& ji = j.at("initial");
    detail::reject_unknown_keys(ji,
                                {"type", "k", "mass", "k1", "k2", "w1", "w2",
                                 "phi", "delta", "path"},
                                "initial");
    InitialSpec init;
    const std::string type = ji.at("type").get<std::string>();
    if (type == "delta") {
      init.type = InitialSpec::Type::kDelta;
      init.k = detail::get_int(ji, "k", 0);
      init.mass = detail::get_real(ji, "mass", 1.0);
    } else if (type == "two_point") {
      init.type = InitialSpec::Type::kTwoPoint;
      init.k1 = ji.at("k1").get<int>();
      init.k2 = ji.at("k2").get<int>();
      init.w1 = detail::get_real(ji, "w1", 0.5);
      init.w2 = detail::get_real(ji, "w2", 0.5);
    } else if (type == "equilibrium") {
      init.type = InitialSpec::Type::kEquilibrium;
      init.phi = ji.at("phi").get<double>();
    } else if (type == "equilibrium_perturbed") {
      init.type = InitialSpec::Type::kEquilibriumPerturbed;
      init.phi = ji.at("phi").get<double>();
      init.delta = ji.at("delta").get<double>();
    } else if (type == "csv") {
      init.type = InitialSpec::Type::kCsv;
      std::filesystem::path p = ji.at("path").get<std::string>();
      init.csv = p.is_absolute() ? p : base_dir / p;
    } else {
      throw std::invalid_argument("unknown initial type: " + type);
    }
    cfg.initial = init;
  }

  if (j.contains("integrator")) {
    const nlohmann::json& je = j.at("integrator");
    detail::reject_unknown_keys(
        je, {"t_end", "dt_max", "safety", "neg_tolerance", "record_stride"},
        "integrator");
    cfg.integrator.t_end = detail::get_real(je, "t_end", 1.0);
    cfg.integrator.dt_max = detail::get_real(je, "dt_max", 0.05);
    cfg.integrator.safety = detail::get_real(je, "safety", 0.1);
    cfg.integrator.neg_tolerance =
        detail::get_real(je, "neg_tolerance", 1e-12);
    cfg.integrator.record_stride = detail::get_int(je, "record_stride", 1);
    cfg.integrator.validate();
  }

  if (j.contains("diagnostics")) {
    const nlohmann::json& jd = j.at("diagnostics");
    detail::reject_unknown_keys(jd,
                                {"entropy_phi", "lower_bound", "ckp_alpha",
                                 "tol_dissipation", "tol_integral"},
                                "diagnostics");
    if (jd.contains("entropy_phi")) {
      cfg.diagnostics.entropy_phi = jd.at("entropy_phi").get<double>();
    }
    if (jd.contains("ckp_alpha")) {
      cfg.diagnostics.ckp_alpha = jd.at("ckp_alpha").get<double>();
    }
    cfg.diagnostics.tol_dissipation =
        detail::get_real(jd, "tol_dissipation", 1e-3);
    cfg.diagnostics.tol_integral = detail::get_real(jd, "tol_integral", 1e-4);
    if (jd.contains("lower_bound")) {
      const nlohmann::json& jl = jd.at("lower_bound");
      detail::reject_unknown_keys(jl, {"k0", "t0", "l_max", "a_seq"},
                                  "lower_bound");
      LowerBoundSpec lb;
      lb.k0 = detail::get_int(jl, "k0", 0);
      lb.t0 = detail::get_real(jl, "t0", 1.0);
      lb.l_max = detail::get_int(jl, "l_max", 3);
      const std::string seq =
          jl.contains("a_seq") ? jl.at("a_seq").get<std::string>()
                               : "geometric";
      if (seq == "geometric") {
        lb.a_seq = Aseq::kGeometric;
      } else if (seq == "quadratic") {
        lb.a_seq = Aseq::kQuadratic;
      } else {
        throw std::invalid_argument("unknown a_seq: " + seq);
      }
      cfg.diagnostics.lower_bound = lb;
    }
  }

  if (j.contains("stability")) {
    const nlohmann::json& js = j.at("stability");
    detail::reject_unknown_keys(
        js, {"phi", "delta_grid", "epsilon_grid", "t_end"}, "stability");
    StabilitySpec st;
    st.phi = js.at("phi").get<double>();
    st.delta_grid = js.at("delta_grid").get<std::vector<double>>();
    if (js.contains("epsilon_grid")) {
      st.epsilon_grid = js.at("epsilon_grid").get<std::vector<double>>();
    }
    st.t_end = detail::get_real(js, "t_end", 1.0);
    cfg.stability = st;
  }

  if (j.contains("heat")) {
    const nlohmann::json& jh = j.at("heat");
    detail::reject_unknown_keys(jh, {"t_max", "samples", "f0_at_0", "q0_abs"},
                                "heat");
    HeatSpec hs;
    hs.t_max = detail::get_real(jh, "t_max", 2.0);
    hs.samples = detail::get_int(jh, "samples", 41);
    hs.f0_at_0 = detail::get_real(jh, "f0_at_0", 1.0);
    hs.q0_abs = detail::get_real(jh, "q0_abs", 0.0);
    if (hs.t_max <= 0.0 || hs.samples < 2) {
      throw std::invalid_argument("heat needs t_max > 0 and samples >= 2");
    }
    cfg.heat = hs;
  }

  if (j.contains("equilibrium")) {
    const nlohmann::json& jq = j.at("equilibrium");
    detail::reject_unknown_keys(jq, {"phi", "charge"}, "equilibrium");
    EquilibriumSpec eq;
    if (jq.contains("phi")) eq.phi = jq.at("phi").get<double>();
    if (jq.contains("charge")) eq.charge = jq.at("charge").get<double>();
    if (!eq.phi && !eq.charge) {
      throw std::invalid_argument(
          "equilibrium needs either phi or charge");
    }
    cfg.equilibrium = eq;
  }

  return cfg;
}

inline ScenarioConfig ScenarioConfig::parse_file(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::invalid_argument("cannot open config file: " + path.string());
  }
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("config parse error: ") +
                                e.what());
  }
  return parse(j, path.has_parent_path()
                      ? path.parent_path()
                      : std::filesystem::path("."));
}

// ---------------------------------------------------------------------------
// Checks and run results.
// ---------------------------------------------------------------------------

struct CheckRow {
  std::string name;
  bool pass = false;
  double value = 0.0;
  double tolerance = 0.0;
};

struct RunResult {
  std::vector<CheckRow> checks;
  nlohmann::json manifest;
  std::filesystem::path out_dir;
  std::vector<std::string> warnings;

  bool ok() const {
    for (const CheckRow& c : checks) {
      if (!c.pass) return false;
    }
    return true;
  }
};

namespace detail {

inline void write_text(const std::filesystem::path& p, const std::string& s) {
  std::ofstream out(p);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << s;
}

inline nlohmann::json checks_json(const std::vector<CheckRow>& checks) {
  nlohmann::json arr = nlohmann::json::array();
  for (const CheckRow& c : checks) {
    arr.push_back({{"name", c.name},
                   {"pass", c.pass},
                   {"value", json_real(c.value)},
                   {"tolerance", json_real(c.tolerance)}});
  }
  return arr;
}

class StopWatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(
               std::chrono::steady_clock::now() - start_)
        .count();
  }

 private:
  std::chrono::steady_clock::time_point start_ =
      std::chrono::steady_clock::now();
};

inline nlohmann::json base_manifest(const std::string& subcommand,
                                    const nlohmann::json& config_json) {
  return {{"version", kToolVersion},
          {"subcommand", subcommand},
          {"config", config_json},
          {"config_hash", fnv1a64_hex(config_json.dump())}};
}

// Windowed, unit-mass equilibrium reference used for entropy diagnostics
// and perturbed initial states.
inline Density equilibrium_reference(const EquilibriumFamily& fam, double phi,
                                     int n) {
  return fam.equilibrium_density(phi, Window(n)).normalized();
}

inline Density perturb_two_site(const Density& g, double delta) {
  require(g.window().n() >= 3,
          "perturbed equilibrium needs a window half-width >= 3");
  require(delta >= 0.0, "perturbation size must be >= 0");
  const double theta = delta / 12.0;
  require(theta <= std::min(g.at(1), g.at(-1)),
          "perturbation size exceeds the available mass at the donor sites");
  const Window& w = g.window();
  std::vector<double> vals(g.values().begin(), g.values().end());
  vals[static_cast<std::size_t>(w.offset(1))] -= theta;
  vals[static_cast<std::size_t>(w.offset(-1))] -= theta;
  vals[static_cast<std::size_t>(w.offset(3))] += theta;
  vals[static_cast<std::size_t>(w.offset(-3))] += theta;
  return Density(w, std::move(vals));
}

}  // namespace detail

// Builds the configured initial state on the scenario window.  States whose
// mass is off unity by more than 1e-12 are renormalized with a warning.
struct InitialState {
  Density density;
  bool renormalized = false;
  double original_mass = 1.0;
};

inline InitialState build_initial(const ScenarioConfig& cfg) {
  const InitialSpec& spec = cfg.need_initial();
  const Window w(cfg.need_window());
  Density f0 = Density::zero(w);
  switch (spec.type) {
    case InitialSpec::Type::kDelta: {
      require(w.contains(spec.k), "delta site lies outside the window");
      require(spec.mass > 0.0, "delta mass must be > 0");
      f0 = Density::delta(w, spec.k, spec.mass);
      break;
    }
    case InitialSpec::Type::kTwoPoint: {
      require(w.contains(spec.k1) && w.contains(spec.k2),
              "two-point sites lie outside the window");
      require(spec.k1 != spec.k2, "two-point sites must differ");
      require(spec.w1 >= 0.0 && spec.w2 >= 0.0 && spec.w1 + spec.w2 > 0.0,
              "two-point weights must be nonnegative and not both zero");
      std::vector<double> vals(static_cast<std::size_t>(w.size()), 0.0);
      vals[static_cast<std::size_t>(w.offset(spec.k1))] = spec.w1;
      vals[static_cast<std::size_t>(w.offset(spec.k2))] = spec.w2;
      f0 = Density(w, std::move(vals));
      break;
    }
    case InitialSpec::Type::kEquilibrium: {
      const auto fam = EquilibriumFamily::build(cfg.need_kernel());
      f0 = detail::equilibrium_reference(fam, spec.phi, w.n());
      break;
    }
    case InitialSpec::Type::kEquilibriumPerturbed: {
      const auto fam = EquilibriumFamily::build(cfg.need_kernel());
      f0 = detail::perturb_two_site(
          detail::equilibrium_reference(fam, spec.phi, w.n()), spec.delta);
      break;
    }
    case InitialSpec::Type::kCsv: {
      std::ifstream in(spec.csv);
      if (!in) {
        throw std::invalid_argument("cannot open initial-state file: " +
                                    spec.csv.string());
      }
      f0 = embed(read_density_csv(in), w);
      break;
    }
  }

  InitialState st{std::move(f0)};
  st.original_mass = st.density.moments().mass;
  if (std::abs(st.original_mass - 1.0) > 1e-12) {
    require(st.original_mass > 0.0, "initial state has no mass");
    std::vector<double> vals(st.density.values().begin(),
                             st.density.values().end());
    for (double& v : vals) v /= st.original_mass;
    st.density = Density(w, std::move(vals));
    st.renormalized = true;
  }
  return st;
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

inline RunResult run_simulate(const ScenarioConfig& cfg,
                              const nlohmann::json& config_json,
                              const std::filesystem::path& out_dir) {
  detail::StopWatch watch;
  const Kernel& kernel = cfg.need_kernel();
  const int n = cfg.need_window();
  const TruncatedKernel tk = truncate(kernel, n);

  // Fail early with the family diagnostics if an equilibrium reference is
  // requested for a kernel without one.
  std::optional<EquilibriumFamily> fam;
  if (cfg.diagnostics.entropy_phi ||
      cfg.need_initial().type == InitialSpec::Type::kEquilibrium ||
      cfg.need_initial().type == InitialSpec::Type::kEquilibriumPerturbed) {
    fam = EquilibriumFamily::build(kernel);
  }
  if (cfg.diagnostics.ckp_alpha && !cfg.diagnostics.entropy_phi) {
    throw std::invalid_argument(
        "ckp_alpha requires an entropy reference (diagnostics.entropy_phi)");
  }

  InitialState init = build_initial(cfg);

  RunResult res;
  res.out_dir = out_dir;
  if (init.renormalized) {
    res.warnings.push_back(
        "initial state renormalized to unit mass (was " +
        format_double(init.original_mass) + ")");
  }

  const Trajectory traj = evolve(tk, init.density, cfg.integrator);

  res.checks.push_back({"mass_conservation", traj.max_mass_drift <= 1e-9,
                        traj.max_mass_drift, 1e-9});
  res.checks.push_back({"charge_conservation", traj.max_charge_drift <= 1e-9,
                        traj.max_charge_drift, 1e-9});
  res.checks.push_back({"positivity_clamps", true,
                        static_cast<double>(traj.total_clamps), 0.0});
  const double lb_defect = exp_lower_bound_defect(traj, kernel.c_upper());
  res.checks.push_back(
      {"exponential_lower_bound", lb_defect <= 1e-9, lb_defect, 1e-9});
  const double growth_defect = l11_growth_defect(traj, kernel.c_upper());
  res.checks.push_back(
      {"weighted_norm_growth", growth_defect <= 1e-9, growth_defect, 1e-9});

  std::optional<EntropyReport> entropy_report;
  std::optional<Density> reference;
  if (cfg.diagnostics.entropy_phi) {
    reference =
        detail::equilibrium_reference(*fam, *cfg.diagnostics.entropy_phi, n);
    entropy_report =
        dissipation_check(traj, *reference, tk, cfg.diagnostics.tol_dissipation,
                          cfg.diagnostics.tol_integral);
    res.checks.push_back({"entropy_monotone",
                          entropy_report->h_nonincreasing,
                          entropy_report->max_increase,
                          entropy_report->tol_monotone});
    res.checks.push_back({"dissipation_identity",
                          entropy_report->dissipation_ok,
                          entropy_report->dissipation_defect,
                          entropy_report->tol_d});
    res.checks.push_back({"integral_identity", entropy_report->integral_ok,
                          entropy_report->integral_defect,
                          entropy_report->tol_i});

    const double rho = std::max(*cfg.diagnostics.entropy_phi / fam->phi_plus(),
                                fam->phi_minus() / *cfg.diagnostics.entropy_phi);
    const TrajectoryBoundReport tb =
        trajectory_l11_bound(traj, *reference, rho);
    res.checks.push_back(
        {"trajectory_norm_bound", tb.pass, tb.bound - tb.sup_l11, 0.0});

    if (cfg.diagnostics.ckp_alpha) {
      const double alpha = *cfg.diagnostics.ckp_alpha;
      require(alpha > 0.0, "ckp_alpha must be > 0");
      const CkpReport ck =
          ckp_check(traj.final_state(), *reference,
                    [alpha](int k) { return alpha * (1.0 + std::abs(k)); });
      res.checks.push_back(
          {"weighted_tv_bound", ck.pass, ck.rhs - ck.lhs, 0.0});
    }
  }

  if (cfg.diagnostics.lower_bound) {
    const LowerBoundSpec& lb = *cfg.diagnostics.lower_bound;
    const LowerBoundCertificate cert = lower_bound_certificate(
        kernel.c_upper(), kernel.c_lower(), moments(init.density).mass,
        init.density.at(lb.k0), lb.k0, lb.a_seq, lb.t0, lb.l_max);
    const double defect = certificate_defect(cert, traj);
    res.checks.push_back(
        {"lower_bound_certificate", defect <= 1e-9, defect, 1e-9});
  }

  std::filesystem::create_directories(out_dir);
  {
    std::ofstream tcsv(out_dir / "trajectory.csv");
    if (!tcsv) throw std::runtime_error("cannot write trajectory.csv");
    if (entropy_report) {
      write_trajectory_csv(tcsv, traj, &entropy_report->h_series,
                           &entropy_report->w_series);
    } else {
      write_trajectory_csv(tcsv, traj);
    }
  }
  {
    std::ofstream fcsv(out_dir / "final_state.csv");
    if (!fcsv) throw std::runtime_error("cannot write final_state.csv");
    write_density_csv(fcsv, traj.final_state());
    detail::write_text(out_dir / "final_state.json",
                       density_to_json(traj.final_state()).dump(2) + "\n");
  }

  nlohmann::json manifest = detail::base_manifest("simulate", config_json);
  manifest["resolved_initial"] = density_to_json(init.density);
  manifest["renormalized"] = init.renormalized;
  manifest["original_mass"] = json_real(init.original_mass);
  manifest["dt"] = traj.dt;
  manifest["steps_recorded"] = traj.times.size();
  manifest["total_clamps"] = traj.total_clamps;
  manifest["warnings"] = res.warnings;
  manifest["checks"] = detail::checks_json(res.checks);
  manifest["pass"] = res.ok();
  manifest["wall_time_s"] = watch.seconds();
  detail::write_text(out_dir / "manifest.json", manifest.dump(2) + "\n");
  res.manifest = std::move(manifest);
  return res;
}

// ---------------------------------------------------------------------------
// equilibrium
// ---------------------------------------------------------------------------

inline RunResult run_equilibrium(const ScenarioConfig& cfg,
                                 const nlohmann::json& config_json,
                                 const std::filesystem::path& out_dir) {
  detail::StopWatch watch;
  const Kernel& kernel = cfg.need_kernel();
  const int n = cfg.need_window();
  if (!cfg.equilibrium) {
    throw std::invalid_argument("config is missing an equilibrium section");
  }

  const EquilibriumFamily fam = EquilibriumFamily::build(kernel);
  const double phi = cfg.equilibrium->phi
                         ? *cfg.equilibrium->phi
                         : fam.phi_of_charge(*cfg.equilibrium->charge);
  const double z = fam.partition_z(phi);
  if (!std::isfinite(z)) {
    throw std::domain_error("partition function diverges at phi = " +
                            format_double(phi));
  }
  const double charge = fam.charge_of_phi(phi);
  const EquilibriumDensity eq = fam.equilibrium_density(phi, Window(n));

  RunResult res;
  res.out_dir = out_dir;

  // The full-operator residual of the windowed equilibrium is controlled by
  // the clipped tail; evaluated here as a self-consistency check.
  const double residual = stationarity_residual(fam, phi, n);
  const int half = std::max(1, n / 2);
  const double tail_half =
      fam.equilibrium_density(phi, Window(half)).tail_mass;
  const double residual_cap = 8.0 * kernel.c_upper() * tail_half;
  res.checks.push_back({"stationarity_residual", residual <= residual_cap,
                        residual, residual_cap});
  res.checks.push_back(
      {"window_tail_mass", eq.tail_mass <= 0.5, eq.tail_mass, 0.5});

  std::filesystem::create_directories(out_dir);
  nlohmann::json report = {{"kappa", json_real(fam.kappa())},
                           {"lambda_plus", json_real(fam.lambda_plus())},
                           {"lambda_minus", json_real(fam.lambda_minus())},
                           {"phi_minus", json_real(fam.phi_minus())},
                           {"phi_plus", json_real(fam.phi_plus())},
                           {"phi", json_real(phi)},
                           {"Z", json_real(z)},
                           {"charge", json_real(charge)},
                           {"tail_mass", json_real(eq.tail_mass)}};
  detail::write_text(out_dir / "equilibrium.json", report.dump(2) + "\n");
  {
    std::ofstream dcsv(out_dir / "density.csv");
    if (!dcsv) throw std::runtime_error("cannot write density.csv");
    write_density_csv(dcsv, eq.as_density());
  }

  nlohmann::json manifest = detail::base_manifest("equilibrium", config_json);
  manifest["equilibrium"] = report;
  manifest["checks"] = detail::checks_json(res.checks);
  manifest["pass"] = res.ok();
  manifest["wall_time_s"] = watch.seconds();
  detail::write_text(out_dir / "manifest.json", manifest.dump(2) + "\n");
  res.manifest = std::move(manifest);
  return res;
}

// ---------------------------------------------------------------------------
// validate-kernel
// ---------------------------------------------------------------------------

inline RunResult run_validate_kernel(const ScenarioConfig& cfg,
                                     const nlohmann::json& config_json,
                                     const std::filesystem::path& out_dir) {
  detail::StopWatch watch;
  const Kernel& kernel = cfg.need_kernel();
  const KernelWindowReport rep =
      check_extended_bd(kernel, cfg.probe_window);

  RunResult res;
  res.out_dir = out_dir;
  res.checks.push_back({"exchange_balance_identities",
                        rep.bd_max_violation < 1e-9, rep.bd_max_violation,
                        1e-9});
  res.checks.push_back({"ladder_weight_balance", true, rep.db_max_violation,
                        0.0});
  res.checks.push_back({"kernel_bounds", true, rep.bounds_violation, 0.0});
  res.checks.push_back({"reflection_symmetric", true,
                        rep.reflection_symmetric ? 1.0 : 0.0, 0.0});

  std::filesystem::create_directories(out_dir);
  nlohmann::json report = {
      {"window", rep.window},
      {"bd_max_violation", json_real(rep.bd_max_violation)},
      {"db_max_violation", json_real(rep.db_max_violation)},
      {"reflection_symmetric", rep.reflection_symmetric},
      {"bounds_violation", json_real(rep.bounds_violation)}};
  detail::write_text(out_dir / "kernel_report.json", report.dump(2) + "\n");

  nlohmann::json manifest =
      detail::base_manifest("validate-kernel", config_json);
  manifest["kernel_report"] = report;
  manifest["checks"] = detail::checks_json(res.checks);
  manifest["pass"] = res.ok();
  manifest["wall_time_s"] = watch.seconds();
  detail::write_text(out_dir / "manifest.json", manifest.dump(2) + "\n");
  res.manifest = std::move(manifest);
  return res;
}

// ---------------------------------------------------------------------------
// stability
// ---------------------------------------------------------------------------

inline RunResult run_stability(const ScenarioConfig& cfg,
                               const nlohmann::json& config_json,
                               const std::filesystem::path& out_dir,
                               int threads) {
  detail::StopWatch watch;
  const Kernel& kernel = cfg.need_kernel();
  const int n = cfg.need_window();
  if (!cfg.stability) {
    throw std::invalid_argument("config is missing a stability section");
  }
  const StabilitySpec& st = *cfg.stability;
  const EquilibriumFamily fam = EquilibriumFamily::build(kernel);
  const StabilityTable table =
      stability_probe(truncate(kernel, n), fam, st.phi, st.epsilon_grid,
                      st.delta_grid, st.t_end, cfg.integrator, threads);

  RunResult res;
  res.out_dir = out_dir;
  for (const StabilityRow& row : table.rows) {
    res.checks.push_back({"deviation_within_bound_delta_" +
                              format_double(row.delta),
                          row.within_bound,
                          row.ckp_bound - row.sup_deviation, 0.0});
  }

  std::filesystem::create_directories(out_dir);
  std::ostringstream csv;
  csv << "delta,h0,sup_deviation,ckp_bound,within_bound\n";
  for (const StabilityRow& row : table.rows) {
    csv << format_double(row.delta) << ',' << format_double(row.h0) << ','
        << format_double(row.sup_deviation) << ','
        << format_double(row.ckp_bound) << ',' << (row.within_bound ? 1 : 0)
        << '\n';
  }
  detail::write_text(out_dir / "stability.csv", csv.str());

  std::ostringstream eps_csv;
  eps_csv << "epsilon,delta,achieved\n";
  for (const EpsilonRow& er : table.eps_rows) {
    eps_csv << format_double(er.epsilon) << ',' << format_double(er.delta)
            << ',' << (er.achieved ? 1 : 0) << '\n';
  }
  detail::write_text(out_dir / "stability_epsilon.csv", eps_csv.str());

  nlohmann::json manifest = detail::base_manifest("stability", config_json);
  manifest["alpha"] = json_real(table.alpha);
  manifest["exp_moment"] = json_real(table.exp_moment);
  manifest["deviations_decreasing"] = table.deviations_decreasing;
  manifest["threads"] = threads;
  manifest["checks"] = detail::checks_json(res.checks);
  manifest["pass"] = res.ok();
  manifest["wall_time_s"] = watch.seconds();
  detail::write_text(out_dir / "manifest.json", manifest.dump(2) + "\n");
  res.manifest = std::move(manifest);
  return res;
}

// ---------------------------------------------------------------------------
// heat-oracle
// ---------------------------------------------------------------------------

inline RunResult run_heat_oracle(const ScenarioConfig& cfg,
                                 const nlohmann::json& config_json,
                                 const std::filesystem::path& out_dir) {
  detail::StopWatch watch;
  if (!cfg.heat) {
    throw std::invalid_argument("config is missing a heat section");
  }
  const HeatSpec& hs = *cfg.heat;
  const HeatGreens oracle;

  RunResult res;
  res.out_dir = out_dir;

  std::ostringstream csv;
  csv << "t,g0,integral_g0,abs_charge_lower\n";
  double prev_integral = -1.0;
  bool increasing = true;
  for (int i = 0; i < hs.samples; ++i) {
    const double t = hs.t_max * static_cast<double>(i) /
                     static_cast<double>(hs.samples - 1);
    const double g0 = oracle.green(t, 0);
    const double ig = oracle.integral_g0(t);
    if (i > 0 && ig <= prev_integral) increasing = false;
    prev_integral = ig;
    csv << format_double(t) << ',' << format_double(g0) << ','
        << format_double(ig) << ','
        << format_double(oracle.abs_charge_lower(t, hs.f0_at_0, hs.q0_abs))
        << '\n';
  }
  res.checks.push_back(
      {"integral_strictly_increasing", increasing, increasing ? 1.0 : 0.0,
       0.0});

  KahanSum norm;
  for (int k = -50; k <= 50; ++k) norm.add(oracle.green(1.0, k));
  const double norm_defect = std::abs(norm.value() - 1.0);
  res.checks.push_back(
      {"green_normalization", norm_defect <= 1e-12, norm_defect, 1e-12});

  std::filesystem::create_directories(out_dir);
  detail::write_text(out_dir / "heat.csv", csv.str());

  nlohmann::json manifest = detail::base_manifest("heat-oracle", config_json);
  manifest["checks"] = detail::checks_json(res.checks);
  manifest["pass"] = res.ok();
  manifest["wall_time_s"] = watch.seconds();
  detail::write_text(out_dir / "manifest.json", manifest.dump(2) + "\n");
  res.manifest = std::move(manifest);
  return res;
}

// ---------------------------------------------------------------------------
// entropy-report: reads a finished simulate run directory, reruns the
// deterministic trajectory from the manifest's embedded config, and emits
// the entropy report and (t, H, W) series.
// ---------------------------------------------------------------------------

inline RunResult run_entropy_report(const std::filesystem::path& run_dir,
                                    const std::filesystem::path& out_dir) {
  detail::StopWatch watch;
  const std::filesystem::path manifest_path = run_dir / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in) {
    throw std::invalid_argument("cannot open run manifest: " +
                                manifest_path.string());
  }
  nlohmann::json manifest_in;
  try {
    in >> manifest_in;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("manifest parse error: ") +
                                e.what());
  }
  if (!manifest_in.contains("config") ||
      !manifest_in.contains("resolved_initial")) {
    throw std::invalid_argument(
        "manifest does not describe a simulate run with a stored initial "
        "state");
  }
  const ScenarioConfig cfg =
      ScenarioConfig::parse(manifest_in.at("config"), run_dir);
  if (!cfg.diagnostics.entropy_phi) {
    throw std::invalid_argument(
        "the recorded run had no entropy reference; rerun simulate with "
        "diagnostics.entropy_phi");
  }

  const Kernel& kernel = cfg.need_kernel();
  const int n = cfg.need_window();
  const TruncatedKernel tk = truncate(kernel, n);
  const Density f0 = density_from_json(manifest_in.at("resolved_initial"));
  require(f0.window().n() == n, "stored initial state window mismatch");

  const EquilibriumFamily fam = EquilibriumFamily::build(kernel);
  const Density reference =
      detail::equilibrium_reference(fam, *cfg.diagnostics.entropy_phi, n);
  const Trajectory traj = evolve(tk, f0, cfg.integrator);
  const EntropyReport rep =
      dissipation_check(traj, reference, tk, cfg.diagnostics.tol_dissipation,
                        cfg.diagnostics.tol_integral);

  RunResult res;
  res.out_dir = out_dir;
  res.checks.push_back({"entropy_monotone", rep.h_nonincreasing,
                        rep.max_increase, rep.tol_monotone});
  res.checks.push_back({"dissipation_identity", rep.dissipation_ok,
                        rep.dissipation_defect, rep.tol_d});
  res.checks.push_back({"integral_identity", rep.integral_ok,
                        rep.integral_defect, rep.tol_i});

  std::filesystem::create_directories(out_dir);
  std::ostringstream csv;
  csv << "t,entropy,wN\n";
  for (std::size_t i = 0; i < traj.times.size(); ++i) {
    csv << format_double(traj.times[i]) << ','
        << format_double(rep.h_series[i]) << ','
        << format_double(rep.w_series[i]) << '\n';
  }
  detail::write_text(out_dir / "entropy.csv", csv.str());

  nlohmann::json report = {
      {"balance_defect", json_real(rep.balance_defect)},
      {"max_increase", json_real(rep.max_increase)},
      {"dissipation_defect", json_real(rep.dissipation_defect)},
      {"integral_defect", json_real(rep.integral_defect)},
      {"h_first", json_real(rep.h_series.front())},
      {"h_last", json_real(rep.h_series.back())},
      {"samples", rep.h_series.size()}};
  detail::write_text(out_dir / "entropy_report.json", report.dump(2) + "\n");

  nlohmann::json manifest =
      detail::base_manifest("entropy-report", manifest_in.at("config"));
  manifest["source_run"] = run_dir.string();
  manifest["entropy_report"] = report;
  manifest["checks"] = detail::checks_json(res.checks);
  manifest["pass"] = res.ok();
  manifest["wall_time_s"] = watch.seconds();
  detail::write_text(out_dir / "manifest.json", manifest.dump(2) + "\n");
  res.manifest = std::move(manifest);
  return res;
}

}  // namespace xck
