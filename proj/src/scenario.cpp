#include "cpest/scenario.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string_view>

#include <json.hpp>

namespace cpest {

namespace {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

[[noreturn]] void fail(const std::string& path, const std::string& msg) {
  throw ValidationError(path + ": " + msg);
}

void check_keys(const json& obj, const std::string& path,
                std::initializer_list<const char*> allowed) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    const bool known =
        std::any_of(allowed.begin(), allowed.end(),
                    [&](const char* k) { return it.key() == k; });
    if (!known)
      fail(path.empty() ? it.key() : path + "." + it.key(), "unknown field");
  }
}

const json* find(const json& obj, const char* key) {
  const auto it = obj.find(key);
  return it == obj.end() ? nullptr : &*it;
}

double as_number(const json& j, const std::string& path) {
  if (!j.is_number()) fail(path, "must be a number");
  return j.get<double>();
}

double number_or(const json& obj, const char* key, const std::string& path,
                 double fallback) {
  const json* j = find(obj, key);
  return j ? as_number(*j, path + "." + key) : fallback;
}

long long as_integer(const json& j, const std::string& path) {
  if (!j.is_number_integer()) fail(path, "must be an integer");
  return j.get<long long>();
}

VectorXd parse_vector(const json& j, const std::string& path) {
  if (!j.is_array()) fail(path, "must be an array of numbers");
  VectorXd v(j.size());
  for (size_t i = 0; i < j.size(); ++i)
    v[Index(i)] = as_number(j[i], path + "[" + std::to_string(i) + "]");
  return v;
}

MatrixXd parse_matrix(const json& j, const std::string& path) {
  if (!j.is_array() || j.empty()) fail(path, "must be an array of rows");
  const size_t rows = j.size();
  size_t cols = 0;
  MatrixXd m;
  for (size_t i = 0; i < rows; ++i) {
    const std::string row_path = path + "[" + std::to_string(i) + "]";
    const VectorXd row = parse_vector(j[i], row_path);
    if (i == 0) {
      cols = size_t(row.size());
      m.resize(Index(rows), Index(cols));
    } else if (size_t(row.size()) != cols) {
      fail(row_path, "row length differs from the first row");
    }
    m.row(Index(i)) = row.transpose();
  }
  return m;
}

ChannelModel parse_channel(const json& j, const std::string& path) {
  if (!j.is_object()) fail(path, "must be an object");
  check_keys(j, path,
             {"kd", "kp", "c", "G", "mu0", "mudot0", "sigma_x", "sigma_v",
              "rho"});
  if (!find(j, "kd")) fail(path + ".kd", "missing required field");
  if (!find(j, "kp")) fail(path + ".kp", "missing required field");
  try {
    return ChannelModel::create(
        as_number(*find(j, "kd"), path + ".kd"),
        as_number(*find(j, "kp"), path + ".kp"),
        number_or(j, "c", path, 0.0), number_or(j, "G", path, 0.0),
        number_or(j, "mu0", path, 0.0), number_or(j, "mudot0", path, 0.0),
        number_or(j, "sigma_x", path, 0.0), number_or(j, "sigma_v", path, 0.0),
        number_or(j, "rho", path, 0.0));
  } catch (const DomainError& e) {
    fail(path, e.what());
  }
}

LinearSde parse_sde(const json& j, const std::string& path) {
  if (!j.is_object()) fail(path, "must be an object");
  check_keys(j, path, {"A", "c", "S", "mu0", "cov0", "Tp", "Tv"});
  for (const char* key : {"A", "c", "S", "mu0", "cov0", "Tp", "Tv"})
    if (!find(j, key)) fail(path + "." + key, "missing required field");
  LinearSde m;
  m.A = parse_matrix(*find(j, "A"), path + ".A");
  m.c = parse_vector(*find(j, "c"), path + ".c");
  m.S = parse_matrix(*find(j, "S"), path + ".S");
  m.init.mean = parse_vector(*find(j, "mu0"), path + ".mu0");
  m.init.cov = parse_matrix(*find(j, "cov0"), path + ".cov0");
  m.Tp = parse_matrix(*find(j, "Tp"), path + ".Tp");
  m.Tv = parse_matrix(*find(j, "Tv"), path + ".Tv");
  try {
    m.validate();
  } catch (const std::invalid_argument& e) {
    fail(path, e.what());
  }
  return m;
}

ObstacleTrack parse_obstacle(const json& j, const std::string& path,
                             Index dim) {
  if (!j.is_object()) fail(path, "must be an object");
  check_keys(j, path, {"center0", "velocity", "radius"});
  const json* center = find(j, "center0");
  if (!center) fail(path + ".center0", "missing required field");
  ObstacleTrack o;
  o.center0 = parse_vector(*center, path + ".center0");
  if (o.center0.size() != dim)
    fail(path + ".center0", "dimension must match the model (" +
                                std::to_string(dim) + ")");
  const json* vel = find(j, "velocity");
  o.velocity = vel ? parse_vector(*vel, path + ".velocity")
                   : VectorXd::Zero(dim).eval();
  if (o.velocity.size() != dim)
    fail(path + ".velocity", "dimension must match the model (" +
                                 std::to_string(dim) + ")");
  const json* radius = find(j, "radius");
  if (!radius) fail(path + ".radius", "missing required field");
  o.radius = as_number(*radius, path + ".radius");
  if (!(o.radius > 0)) fail(path + ".radius", "must be > 0");
  return o;
}

PlanMode parse_mode(const json& j, const std::string& path) {
  if (!j.is_string()) fail(path, "must be a string");
  const std::string s = j.get<std::string>();
  if (s == "equitime") return PlanMode::equitime;
  if (s == "equidistant-rootsolve") return PlanMode::equidistant_rootsolve;
  if (s == "equidistant-roulette") return PlanMode::equidistant_roulette;
  fail(path, "must be one of equitime, equidistant-rootsolve, "
             "equidistant-roulette");
}

json vector_json(const VectorXd& v) {
  json a = json::array();
  for (Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

json matrix_json(const MatrixXd& m) {
  json rows = json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

json scenario_doc(const Scenario& sc) {
  json j;
  j["horizon_s"] = sc.horizon_s;
  j["vehicle_radius_m"] = sc.vehicle_radius_m;
  if (sc.model.has_channels()) {
    json chans = json::array();
    for (const ChannelModel& ch : sc.model.channels()) {
      json c;
      c["kd"] = ch.kd;
      c["kp"] = ch.kp;
      c["c"] = ch.c;
      c["G"] = ch.G;
      c["mu0"] = ch.mu0;
      c["mudot0"] = ch.mudot0;
      c["sigma_x"] = ch.sigma_x;
      c["sigma_v"] = ch.sigma_v;
      c["rho"] = ch.rho;
      chans.push_back(std::move(c));
    }
    j["channels"] = std::move(chans);
  } else {
    const LinearSde& m = sc.model.sde();
    json s;
    s["A"] = matrix_json(m.A);
    s["c"] = vector_json(m.c);
    s["S"] = matrix_json(m.S);
    s["mu0"] = vector_json(m.init.mean);
    s["cov0"] = matrix_json(m.init.cov);
    s["Tp"] = matrix_json(m.Tp);
    s["Tv"] = matrix_json(m.Tv);
    j["sde"] = std::move(s);
  }
  json obstacles = json::array();
  for (const ObstacleTrack& o : sc.obstacles) {
    json ob;
    ob["center0"] = vector_json(o.center0);
    ob["velocity"] = vector_json(o.velocity);
    ob["radius"] = o.radius;
    obstacles.push_back(std::move(ob));
  }
  j["obstacles"] = std::move(obstacles);
  j["trials"] = sc.trials;
  j["sampling"] = {{"mode", plan_mode_name(sc.sampling.mode)},
                   {"N", sc.sampling.N},
                   {"N_ed", sc.sampling.N_ed}};
  j["filter_alpha"] = sc.filter_alpha;
  j["confidence"] = sc.confidence;
  j["seed"] = sc.seed;
  return j;
}

std::string fnv1a64_hex(std::string_view s) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

json result_json(const EstimateResult& r) {
  json j;
  j["method"] = method_name(r.method);
  j["cp"] = r.cp;
  j["ci_halfwidth"] = r.ci_halfwidth;
  j["confidence"] = r.confidence;
  j["trials"] = r.trials;
  j["collisions"] = r.collisions;
  j["points_used"] = r.points_used;
  j["wall_time_s"] = r.wall_time_s;
  j["seed"] = r.seed;
  j["epsilon_bound"] = r.epsilon_bound;
  j["filtered_everything"] = r.filtered_everything;
  return j;
}

EstimateResult result_from_json(const json& j) {
  EstimateResult r;
  const std::string m = j.at("method").get<std::string>();
  if (m == "mc")
    r.method = Method::mc;
  else if (m == "fdmc")
    r.method = Method::fdmc;
  else
    throw ValidationError("report method: unknown value " + m);
  r.cp = j.at("cp").get<double>();
  r.ci_halfwidth = j.at("ci_halfwidth").get<double>();
  r.confidence = j.at("confidence").get<double>();
  r.trials = j.at("trials").get<long long>();
  r.collisions = j.at("collisions").get<long long>();
  r.points_used = j.at("points_used").get<int>();
  r.wall_time_s = j.at("wall_time_s").get<double>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.epsilon_bound = j.at("epsilon_bound").get<double>();
  r.filtered_everything = j.at("filtered_everything").get<bool>();
  return r;
}

json report_json(const RunReport& report) {
  json j;
  j["scenario_hash"] = report.scenario_hash;
  j["speedup"] = report.speedup;
  json intervals = json::array();
  for (const auto& [a, b] : report.retained_intervals)
    intervals.push_back(json::array({a, b}));
  j["retained_intervals"] = std::move(intervals);
  j["mc"] = report.mc ? result_json(*report.mc) : json(nullptr);
  j["fdmc"] = report.fdmc ? result_json(*report.fdmc) : json(nullptr);
  return j;
}

void write_csv(const RunReport& report, std::ostream& out) {
  out << "method,cp,ci_halfwidth,confidence,trials,points_used,wall_time_s,"
         "seed,epsilon_bound\n";
  const auto row = [&out](const EstimateResult& r) {
    out << method_name(r.method) << ',' << fmt(r.cp) << ','
        << fmt(r.ci_halfwidth) << ',' << fmt(r.confidence) << ',' << r.trials
        << ',' << r.points_used << ',' << fmt(r.wall_time_s) << ',' << r.seed
        << ',' << fmt(r.epsilon_bound) << '\n';
  };
  if (report.mc) row(*report.mc);
  if (report.fdmc) row(*report.fdmc);
}

/// Resolved filter alpha: explicit value, or the 1e-4 budget split evenly.
double resolve_alpha(const Scenario& sc) {
  if (sc.filter_alpha > 0) return sc.filter_alpha;
  return 1e-4 / double(std::max(sc.sampling.N_ed, 1));
}

Index dominant_axis(const VehicleModel& model, double horizon) {
  const VectorXd p0 = model.mean_position(0.0);
  const VectorXd pT = model.mean_position(horizon);
  Index dom = 0;
  (pT - p0).cwiseAbs().maxCoeff(&dom);
  return dom;
}

}  // namespace

const char* method_name(Method m) {
  return m == Method::mc ? "mc" : "fdmc";
}

const char* plan_mode_name(PlanMode m) {
  switch (m) {
    case PlanMode::equitime:
      return "equitime";
    case PlanMode::equidistant_rootsolve:
      return "equidistant-rootsolve";
    case PlanMode::equidistant_roulette:
      return "equidistant-roulette";
    case PlanMode::importance_filtered:
      return "importance-filtered";
  }
  return "unknown";
}

Scenario parse_scenario(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("scenario JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ValidationError("scenario: must be an object");
  check_keys(doc, "",
             {"horizon_s", "vehicle_radius_m", "channels", "sde", "obstacles",
              "trials", "sampling", "filter_alpha", "confidence", "seed"});

  Scenario sc;
  const json* horizon = find(doc, "horizon_s");
  if (!horizon) fail("horizon_s", "missing required field");
  sc.horizon_s = as_number(*horizon, "horizon_s");
  if (!(sc.horizon_s > 0)) fail("horizon_s", "must be > 0");

  const json* radius = find(doc, "vehicle_radius_m");
  if (!radius) fail("vehicle_radius_m", "missing required field");
  sc.vehicle_radius_m = as_number(*radius, "vehicle_radius_m");
  if (!(sc.vehicle_radius_m > 0)) fail("vehicle_radius_m", "must be > 0");

  const json* channels = find(doc, "channels");
  const json* sde = find(doc, "sde");
  if ((channels != nullptr) == (sde != nullptr))
    throw ValidationError(
        "scenario: exactly one of 'channels' and 'sde' is required");
  if (channels) {
    if (!channels->is_array() || channels->empty())
      fail("channels", "must be a nonempty array");
    std::vector<ChannelModel> chs;
    for (size_t i = 0; i < channels->size(); ++i)
      chs.push_back(parse_channel((*channels)[i],
                                  "channels[" + std::to_string(i) + "]"));
    sc.model = VehicleModel::from_channels(std::move(chs));
  } else {
    sc.model = VehicleModel::from_sde(parse_sde(*sde, "sde"));
  }

  const json* obstacles = find(doc, "obstacles");
  if (!obstacles) fail("obstacles", "missing required field");
  if (!obstacles->is_array()) fail("obstacles", "must be an array");
  for (size_t i = 0; i < obstacles->size(); ++i)
    sc.obstacles.push_back(parse_obstacle((*obstacles)[i],
                                          "obstacles[" + std::to_string(i) +
                                              "]",
                                          sc.model.space_dim()));

  if (const json* trials = find(doc, "trials")) {
    sc.trials = as_integer(*trials, "trials");
    if (sc.trials < 1) fail("trials", "must be >= 1");
  }

  if (const json* sampling = find(doc, "sampling")) {
    if (!sampling->is_object()) fail("sampling", "must be an object");
    check_keys(*sampling, "sampling", {"mode", "N", "N_ed"});
    if (const json* mode = find(*sampling, "mode"))
      sc.sampling.mode = parse_mode(*mode, "sampling.mode");
    if (const json* n = find(*sampling, "N")) {
      sc.sampling.N = int(as_integer(*n, "sampling.N"));
      if (sc.sampling.N < 1) fail("sampling.N", "must be >= 1");
    }
    if (const json* n = find(*sampling, "N_ed")) {
      sc.sampling.N_ed = int(as_integer(*n, "sampling.N_ed"));
      if (sc.sampling.N_ed < 1) fail("sampling.N_ed", "must be >= 1");
    }
  }

  if (const json* alpha = find(doc, "filter_alpha")) {
    sc.filter_alpha = as_number(*alpha, "filter_alpha");
    if (!(sc.filter_alpha > 0 && sc.filter_alpha < 1))
      fail("filter_alpha", "must lie in (0, 1)");
  } else {
    sc.filter_alpha = 1e-4 / double(sc.sampling.N_ed);
  }

  if (const json* confidence = find(doc, "confidence")) {
    sc.confidence = as_number(*confidence, "confidence");
    if (!(sc.confidence > 0 && sc.confidence < 1))
      fail("confidence", "must lie in (0, 1)");
  }

  if (const json* seed = find(doc, "seed")) {
    if (!seed->is_number_integer() ||
        (seed->is_number_integer() && !seed->is_number_unsigned() &&
         seed->get<long long>() < 0))
      fail("seed", "must be a nonnegative integer");
    sc.seed = seed->get<std::uint64_t>();
  }
  return sc;
}

Scenario load_scenario(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open scenario file: " + file.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw IoError("failed reading scenario file: " + file.string());
  return parse_scenario(buf.str());
}

std::string scenario_hash(const Scenario& sc) {
  return fnv1a64_hex(scenario_doc(sc).dump());
}

RunReport run_benchmark(const Scenario& sc, MethodSelect methods,
                        const RunOptions& opt) {
  RunReport report;
  report.scenario_hash = scenario_hash(sc);
  const bool do_mc = methods != MethodSelect::fdmc;
  const bool do_fdmc = methods != MethodSelect::mc;
  const double alpha = resolve_alpha(sc);

  if (do_mc) {
    const auto t0 = Clock::now();
    McOptions mo;
    mo.workers = opt.workers;
    mo.confidence = sc.confidence;
    EstimateResult res =
        mc_estimate(sc.model, sc.obstacles, sc.vehicle_radius_m, sc.horizon_s,
                    sc.sampling.N, sc.trials, sc.seed, mo);
    res.wall_time_s = seconds_since(t0);
    report.mc = res;
  }

  if (do_fdmc) {
    const auto t0 = Clock::now();
    SamplingPlan plan;
    if (sc.sampling.mode == PlanMode::equitime) {
      plan = equitime_plan(sc.horizon_s, sc.sampling.N_ed);
    } else {
      // Planning draws come from a reserved substream; trial substreams use
      // the trial index, which stays clear of this one.
      RandomStream plan_rng(sc.seed, ~std::uint64_t(0));
      plan = equidistant_plan(sc.model, sc.horizon_s, sc.sampling.N_ed,
                              sc.sampling.mode, &plan_rng);
    }
    const SamplingPlan filtered = importance_filter(
        plan, sc.model, sc.obstacles, sc.vehicle_radius_m, alpha);
    const FddGaussian fdd = build_fdd(sc.model, filtered.times);
    FdmcOptions fo;
    fo.workers = opt.workers;
    fo.confidence = sc.confidence;
    fo.epsilon_bound = alpha * double(sc.sampling.N_ed);
    EstimateResult res = fdmc_estimate(fdd, sc.obstacles, sc.vehicle_radius_m,
                                       sc.trials, sc.seed, fo);
    res.wall_time_s = seconds_since(t0);
    report.fdmc = res;
    report.retained_intervals = retained_intervals(filtered, plan);
  }

  if (report.mc && report.fdmc && report.fdmc->wall_time_s > 0)
    report.speedup = report.mc->wall_time_s / report.fdmc->wall_time_s;
  return report;
}

void emit_results(const RunReport& report, OutputFormat format,
                  std::ostream& out) {
  if (format == OutputFormat::csv) {
    write_csv(report, out);
  } else {
    out << report_json(report).dump(2) << '\n';
  }
  if (!out) throw IoError("emit_results: stream write failed");
}

void emit_results(const RunReport& report, OutputFormat format,
                  const std::filesystem::path& file) {
  std::ofstream out(file);
  if (!out) throw IoError("cannot open output file: " + file.string());
  emit_results(report, format, out);
  out.flush();
  if (!out) throw IoError("failed writing output file: " + file.string());
}

RunReport parse_report_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("report JSON: ") + e.what());
  }
  RunReport report;
  report.scenario_hash = doc.at("scenario_hash").get<std::string>();
  report.speedup = doc.at("speedup").get<double>();
  for (const json& pair : doc.at("retained_intervals"))
    report.retained_intervals.emplace_back(pair.at(0).get<double>(),
                                           pair.at(1).get<double>());
  if (!doc.at("mc").is_null()) report.mc = result_from_json(doc.at("mc"));
  if (!doc.at("fdmc").is_null()) report.fdmc = result_from_json(doc.at("fdmc"));
  return report;
}

void emit_plot_data(const Scenario& sc, const RunReport& report,
                    const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create plot directory: " + dir.string());

  const Index d = sc.model.space_dim();
  const auto axis_name = [d](Index a) -> std::string {
    static const char* names[] = {"x", "y", "z"};
    return (d <= 3) ? names[a] : "p" + std::to_string(a);
  };

  const auto open = [](const std::filesystem::path& p) {
    std::ofstream out(p);
    if (!out) throw IoError("cannot open plot file: " + p.string());
    return out;
  };

  const int grid = 512;
  {
    std::ofstream out = open(dir / "trajectory.csv");
    out << "t";
    for (Index a = 0; a < d; ++a) out << ',' << axis_name(a);
    out << '\n';
    for (int k = 0; k <= grid; ++k) {
      const double t = sc.horizon_s * double(k) / double(grid);
      const VectorXd p = sc.model.mean_position(t);
      out << fmt(t);
      for (Index a = 0; a < d; ++a) out << ',' << fmt(p[a]);
      out << '\n';
    }
  }
  {
    std::ofstream out = open(dir / "obstacles.csv");
    out << "obstacle,t";
    for (Index a = 0; a < d; ++a) out << ',' << axis_name(a);
    out << '\n';
    for (size_t j = 0; j < sc.obstacles.size(); ++j) {
      for (int k = 0; k <= grid; ++k) {
        const double t = sc.horizon_s * double(k) / double(grid);
        const VectorXd p = sc.obstacles[j].center(t);
        out << j << ',' << fmt(t);
        for (Index a = 0; a < d; ++a) out << ',' << fmt(p[a]);
        out << '\n';
      }
    }
  }
  {
    std::ofstream out = open(dir / "intervals.csv");
    out << "interval,t_start,t_end\n";
    for (size_t i = 0; i < report.retained_intervals.size(); ++i)
      out << i << ',' << fmt(report.retained_intervals[i].first) << ','
          << fmt(report.retained_intervals[i].second) << '\n';
  }
  {
    std::ofstream out = open(dir / "sampling_comparison.csv");
    out << "plan,t,expected_pos\n";
    const Index dom = dominant_axis(sc.model, sc.horizon_s);
    const auto series = [&](const char* name, const SamplingPlan& plan) {
      for (double t : plan.times)
        out << name << ',' << fmt(t) << ','
            << fmt(sc.model.mean_position(t)[dom]) << '\n';
    };
    series("equitime", equitime_plan(sc.horizon_s, sc.sampling.N_ed));
    const PlanMode mode = sc.sampling.mode == PlanMode::equitime
                              ? PlanMode::equidistant_rootsolve
                              : sc.sampling.mode;
    RandomStream plan_rng(sc.seed, ~std::uint64_t(0));
    series("equidistant", equidistant_plan(sc.model, sc.horizon_s,
                                           sc.sampling.N_ed, mode, &plan_rng));
  }
}

}  // namespace cpest
