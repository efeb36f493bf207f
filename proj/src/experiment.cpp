#include "dkg/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

namespace dkg {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

void reject_unknown(const json& obj, const std::string& path, std::initializer_list<const char*> allowed) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool known = false;
    for (const char* a : allowed) known = known || it.key() == a;
    if (!known) throw ConfigError(join(path, it.key()), "unknown key");
  }
}

int get_int(const json& obj, const std::string& key, const std::string& path, int lo) {
  const json& v = obj.at(key);
  if (!v.is_number_integer()) throw ConfigError(join(path, key), "expected an integer");
  const auto x = v.get<long long>();
  if (x < lo || x > 1000000000LL) throw ConfigError(join(path, key), "must be at least " + std::to_string(lo));
  return static_cast<int>(x);
}

double get_number(const json& obj, const std::string& key, const std::string& path) {
  const json& v = obj.at(key);
  if (!v.is_number()) throw ConfigError(join(path, key), "expected a number");
  return v.get<double>();
}

std::string get_string(const json& obj, const std::string& key, const std::string& path) {
  const json& v = obj.at(key);
  if (!v.is_string()) throw ConfigError(join(path, key), "expected a string");
  return v.get<std::string>();
}

}  // namespace

AcquisitionKind parse_acquisition(const std::string& name) {
  for (auto kind : {AcquisitionKind::kDkg, AcquisitionKind::kKg, AcquisitionKind::kEi, AcquisitionKind::kDei,
                    AcquisitionKind::kUcbPe}) {
    if (to_string(kind) == name) return kind;
  }
  throw ConfigError("acquisition", "unknown acquisition '" + name + "' (expected dkg, kg, ei, dei or ucbpe)");
}

FantasyMode parse_mode(const std::string& name) {
  for (auto mode : {FantasyMode::kDirectional, FantasyMode::kFullGradient, FantasyMode::kValueOnly}) {
    if (to_string(mode) == name) return mode;
  }
  throw ConfigError("mode", "unknown mode '" + name + "' (expected directional, full-gradient or value-only)");
}

std::vector<bool> effective_mask(const ExperimentConfig& config) {
  const BenchmarkDef& bench = find_benchmark(config.benchmark);
  if (!config.mask) return bench.default_mask;
  std::vector<bool> mask(static_cast<std::size_t>(bench.dim()), false);
  for (int i : *config.mask) mask[static_cast<std::size_t>(i)] = true;
  return mask;
}

ExperimentConfig parse_config_text(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("", std::string("malformed JSON: ") + e.what());
  }
  if (!root.is_object()) throw ConfigError("", "top level must be an object");
  reject_unknown(root, "",
                 {"benchmark", "acquisition", "mode", "q", "iterations", "replications", "noise_sigma", "mask",
                  "budget", "seed", "output_dir", "timing", "figure1"});
  ExperimentConfig c;
  if (!root.contains("benchmark")) throw ConfigError("benchmark", "missing required key");
  if (!root.contains("acquisition")) throw ConfigError("acquisition", "missing required key");
  c.benchmark = get_string(root, "benchmark", "");
  const BenchmarkDef* bench = nullptr;
  try {
    bench = &find_benchmark(c.benchmark);
  } catch (const ContractViolation& e) {
    throw ConfigError("benchmark", e.what());
  }
  const int d = static_cast<int>(bench->dim());
  c.acquisition = parse_acquisition(get_string(root, "acquisition", ""));
  c.q = root.contains("q") ? get_int(root, "q", "", 1) : bench->default_q;
  if (root.contains("iterations")) c.iterations = get_int(root, "iterations", "", 1);
  if (root.contains("replications")) c.replications = get_int(root, "replications", "", 1);
  if (root.contains("noise_sigma")) {
    c.noise_sigma = get_number(root, "noise_sigma", "");
    if (!(c.noise_sigma >= 0.0) || !std::isfinite(c.noise_sigma)) throw ConfigError("noise_sigma", "must be a finite nonnegative number");
  }
  if (root.contains("mask")) {
    const json& m = root.at("mask");
    if (!m.is_array()) throw ConfigError("mask", "expected an array of partial indices");
    std::vector<int> idx;
    for (std::size_t i = 0; i < m.size(); ++i) {
      const std::string p = "mask[" + std::to_string(i) + "]";
      if (!m[i].is_number_integer()) throw ConfigError(p, "expected an integer index");
      const int v = m[i].get<int>();
      if (v < 0 || v >= d) throw ConfigError(p, "index out of range for a " + std::to_string(d) + "-d benchmark");
      if (std::find(idx.begin(), idx.end(), v) != idx.end()) throw ConfigError(p, "duplicate index");
      idx.push_back(v);
    }
    std::sort(idx.begin(), idx.end());
    c.mask = idx;
  }
  if (root.contains("budget")) {
    const json& b = root.at("budget");
    if (!b.is_object()) throw ConfigError("budget", "expected an object");
    reject_unknown(b, "budget",
                   {"hyper_samples", "walkers", "burn_in", "thin", "restarts", "sga_steps", "inner_starts",
                    "inner_steps", "rerank_fantasies", "ei_fantasies", "initial_design"});
    auto opt = [&](const char* key, std::optional<int>& field, int lo) {
      if (b.contains(key)) field = get_int(b, key, "budget", lo);
    };
    opt("hyper_samples", c.budget.hyper_samples, 1);
    opt("walkers", c.budget.walkers, 4);
    opt("burn_in", c.budget.burn_in, 0);
    opt("thin", c.budget.thin, 1);
    opt("restarts", c.budget.restarts, 1);
    opt("sga_steps", c.budget.sga_steps, 1);
    opt("inner_starts", c.budget.inner_starts, 1);
    opt("inner_steps", c.budget.inner_steps, 1);
    opt("rerank_fantasies", c.budget.rerank_fantasies, 2);
    opt("ei_fantasies", c.budget.ei_fantasies, 2);
    opt("initial_design", c.budget.initial_design, 0);
  }
  if (root.contains("seed")) {
    const json& s = root.at("seed");
    if (!s.is_number_integer() || (s.is_number_integer() && !s.is_number_unsigned() && s.get<long long>() < 0)) {
      throw ConfigError("seed", "expected a nonnegative integer");
    }
    c.seed = s.get<std::uint64_t>();
  }
  if (root.contains("output_dir")) c.output_dir = get_string(root, "output_dir", "");
  if (root.contains("timing")) {
    const std::string t = get_string(root, "timing", "");
    if (t != "wall" && t != "none") throw ConfigError("timing", "expected \"wall\" or \"none\"");
    c.record_timing = t == "wall";
  }
  if (root.contains("figure1")) {
    const json& f = root.at("figure1");
    if (!f.is_object()) throw ConfigError("figure1", "expected an object");
    reject_unknown(f, "figure1", {"grid_size", "history_size", "fantasies", "length_scale"});
    if (f.contains("grid_size")) c.figure1.grid_size = get_int(f, "grid_size", "figure1", 2);
    if (f.contains("history_size")) c.figure1.history_size = get_int(f, "history_size", "figure1", 1);
    if (f.contains("fantasies")) c.figure1.fantasies = get_int(f, "fantasies", "figure1", 2);
    if (f.contains("length_scale")) {
      c.figure1.length_scale = get_number(f, "length_scale", "figure1");
      if (!(c.figure1.length_scale > 0.0)) throw ConfigError("figure1.length_scale", "must be positive");
    }
    if (c.figure1.history_size >= c.figure1.grid_size) {
      throw ConfigError("figure1.history_size", "must be smaller than the grid size");
    }
  }

  const std::vector<bool> mask = effective_mask(c);
  const bool full = std::all_of(mask.begin(), mask.end(), [](bool b) { return b; });
  const bool any = std::any_of(mask.begin(), mask.end(), [](bool b) { return b; });
  if (root.contains("mode")) {
    c.mode = parse_mode(get_string(root, "mode", ""));
  } else {
    switch (c.acquisition) {
      case AcquisitionKind::kDkg:
        c.mode = full ? FantasyMode::kDirectional : FantasyMode::kFullGradient;
        break;
      case AcquisitionKind::kDei:
        c.mode = FantasyMode::kFullGradient;
        break;
      default:
        c.mode = FantasyMode::kValueOnly;
    }
  }
  // Combination rules, reported against the key a user would edit.
  if (c.mode == FantasyMode::kDirectional && !full) {
    throw ConfigError("mode", "directional mode needs every partial derivative to be observable");
  }
  if (c.mode == FantasyMode::kFullGradient && !any) throw ConfigError("mask", "full-gradient mode needs an observable partial");
  try {
    ProblemSpec probe = make_problem(c);
    probe.validate();
  } catch (const ContractViolation& e) {
    throw ConfigError("acquisition", e.what());
  }
  return c;
}

ExperimentConfig parse_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot read config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

std::string serialize(const ExperimentConfig& c) {
  json j;
  j["benchmark"] = c.benchmark;
  j["acquisition"] = to_string(c.acquisition);
  j["mode"] = to_string(c.mode);
  j["q"] = c.q;
  j["iterations"] = c.iterations;
  j["replications"] = c.replications;
  j["noise_sigma"] = c.noise_sigma;
  if (c.mask) j["mask"] = *c.mask;
  json b = json::object();
  auto put = [&](const char* key, const std::optional<int>& v) {
    if (v) b[key] = *v;
  };
  put("hyper_samples", c.budget.hyper_samples);
  put("walkers", c.budget.walkers);
  put("burn_in", c.budget.burn_in);
  put("thin", c.budget.thin);
  put("restarts", c.budget.restarts);
  put("sga_steps", c.budget.sga_steps);
  put("inner_starts", c.budget.inner_starts);
  put("inner_steps", c.budget.inner_steps);
  put("rerank_fantasies", c.budget.rerank_fantasies);
  put("ei_fantasies", c.budget.ei_fantasies);
  put("initial_design", c.budget.initial_design);
  if (!b.empty()) j["budget"] = b;
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir;
  j["timing"] = c.record_timing ? "wall" : "none";
  j["figure1"] = {{"grid_size", c.figure1.grid_size},
                  {"history_size", c.figure1.history_size},
                  {"fantasies", c.figure1.fantasies},
                  {"length_scale", c.figure1.length_scale}};
  return j.dump(2) + "\n";
}

ProblemSpec make_problem(const ExperimentConfig& c) {
  const BenchmarkDef& bench = find_benchmark(c.benchmark);
  ProblemSpec s;
  s.domain = bench.domain;
  s.q = c.q;
  s.iterations = c.iterations;
  s.mode = c.mode;
  s.gradient_mask = effective_mask(c);
  s.acquisition = c.acquisition;
  s.record_timing = c.record_timing;
  const BudgetOverrides& b = c.budget;
  if (b.hyper_samples) s.hyper_samples = *b.hyper_samples;
  if (b.walkers) s.sampler.walkers = *b.walkers;
  if (b.burn_in) s.sampler.burn_in = *b.burn_in;
  if (b.thin) s.sampler.thin = *b.thin;
  if (b.restarts) s.acquisition_options.outer.restarts = *b.restarts;
  if (b.sga_steps) s.acquisition_options.outer.sga_steps = *b.sga_steps;
  if (b.inner_starts) s.acquisition_options.inner.starts = *b.inner_starts;
  if (b.inner_steps) s.acquisition_options.inner.steps = *b.inner_steps;
  if (b.rerank_fantasies) s.acquisition_options.outer.rerank_fantasies = *b.rerank_fantasies;
  if (b.ei_fantasies) s.ei_fantasies = *b.ei_fantasies;
  if (b.initial_design) s.initial_design = *b.initial_design;
  return s;
}

Objective benchmark_objective(const BenchmarkDef& bench, double sigma) {
  return [&bench, sigma](const EvaluationRequest& r) {
    if (r.direction) return EvaluationResult::success(evaluate_directional(bench, r.x, *r.direction, NoiseSpec{sigma}, r.seed));
    return EvaluationResult::success(evaluate(bench, r.x, NoiseSpec{sigma}, r.mask, r.seed));
  };
}

void apply_environment(ExperimentConfig& config) {
  if (const char* dir = std::getenv("DKG_OUTPUT_DIR"); dir != nullptr && *dir != '\0') config.output_dir = dir;
}

int ExperimentResult::completed() const {
  return static_cast<int>(std::count_if(replications.begin(), replications.end(), [](const auto& r) { return r.complete; }));
}

std::string trace_csv(const RunTrace& trace, const BenchmarkDef& bench, bool record_timing) {
  std::ostringstream out;
  out << "iteration,eval_count";
  for (Index i = 0; i < bench.dim(); ++i) out << ",rec_x" << i;
  out << ",rec_value,regret,log10_regret,acq_value,wall_ms\n";
  for (const auto& it : trace.iterations) {
    const Regret r = immediate_regret(bench, it.recommendation);
    out << it.iteration << ',' << it.eval_count;
    for (Index i = 0; i < it.recommendation.size(); ++i) out << ',' << fmt(it.recommendation[i]);
    out << ',' << fmt(bench.value(it.recommendation)) << ',' << fmt(r.regret) << ',' << fmt(r.log10_regret) << ','
        << fmt(it.acquisition_value) << ',' << fmt(record_timing ? it.wall_ms : 0.0) << '\n';
  }
  return out.str();
}

std::vector<AggregateRow> aggregate(const std::vector<ReplicationOutcome>& replications, const BenchmarkDef& bench) {
  std::vector<const RunTrace*> done;
  for (const auto& r : replications) {
    if (r.complete) done.push_back(&r.trace);
  }
  std::vector<AggregateRow> rows;
  if (done.empty()) return rows;
  const std::size_t n = done.front()->iterations.size();
  for (std::size_t t = 0; t < n; ++t) {
    std::vector<double> v;
    for (const RunTrace* tr : done) v.push_back(immediate_regret(bench, tr->iterations[t].recommendation).log10_regret);
    AggregateRow row;
    row.iteration = done.front()->iterations[t].iteration;
    row.eval_count = done.front()->iterations[t].eval_count;
    row.count = static_cast<int>(v.size());
    double sum = 0.0;
    for (double x : v) sum += x;
    row.mean = sum / static_cast<double>(v.size());
    if (v.size() > 1) {
      double sq = 0.0;
      for (double x : v) sq += (x - row.mean) * (x - row.mean);
      row.std_dev = std::sqrt(sq / static_cast<double>(v.size() - 1));
    }
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size();
    row.median = m % 2 == 1 ? v[m / 2] : 0.5 * (v[m / 2 - 1] + v[m / 2]);
    rows.push_back(row);
  }
  return rows;
}

namespace {

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config, int jobs) {
  const BenchmarkDef& bench = find_benchmark(config.benchmark);
  const ProblemSpec spec = make_problem(config);
  const fs::path dir(config.output_dir);
  fs::create_directories(dir);

  ExperimentResult result;
  result.replications.resize(static_cast<std::size_t>(config.replications));
  std::atomic<int> next{0};
  auto worker = [&]() {
    for (int r = next++; r < config.replications; r = next++) {
      ReplicationOutcome& out = result.replications[static_cast<std::size_t>(r)];
      out.index = r;
      out.seed = derive_seed(config.seed, Stream::kReplication, static_cast<std::uint64_t>(r));
      try {
        out.trace = run(spec, benchmark_objective(bench, config.noise_sigma), out.seed, bench.value);
        out.complete = out.trace.complete;
        out.failure = out.trace.failure;
      } catch (const std::exception& e) {
        out.complete = false;
        out.failure = e.what();
      }
      char name[32];
      std::snprintf(name, sizeof name, "trace_r%03d.csv", r);
      out.trace_file = dir / name;
      write_file(out.trace_file, trace_csv(out.trace, bench, config.record_timing));
    }
  };
  const int threads = std::max(1, std::min(jobs, config.replications));
  std::vector<std::thread> pool;
  for (int i = 1; i < threads; ++i) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  std::ostringstream agg;
  agg << "iteration,eval_count,mean_log10_regret,std_log10_regret,median_log10_regret,replications\n";
  for (const auto& row : aggregate(result.replications, bench)) {
    agg << row.iteration << ',' << row.eval_count << ',' << fmt(row.mean) << ',' << fmt(row.std_dev) << ','
        << fmt(row.median) << ',' << row.count << '\n';
  }
  result.aggregate_file = dir / "aggregate.csv";
  write_file(result.aggregate_file, agg.str());

  json meta;
  meta["config"] = json::parse(serialize(config));
  meta["dimension"] = bench.dim();
  meta["min_value"] = bench.min_value;
  meta["completed"] = result.completed();
  json reps = json::array();
  for (const auto& r : result.replications) {
    json e;
    e["index"] = r.index;
    e["seed"] = r.seed;
    e["complete"] = r.complete;
    e["trace_file"] = r.trace_file.filename().string();
    if (!r.failure.empty()) e["failure"] = r.failure;
    e["initial_design"] = r.trace.initial_design.size();
    if (!r.trace.iterations.empty()) {
      const auto& last = r.trace.iterations.back();
      e["final_log10_regret"] = immediate_regret(bench, last.recommendation).log10_regret;
      json digests = json::array();
      for (const auto& it : r.trace.iterations) digests.push_back(it.hyper_digest);
      e["hyper_digests"] = digests;
    }
    reps.push_back(e);
  }
  meta["replications"] = reps;
  meta["aggregate_file"] = result.aggregate_file.filename().string();
  result.metadata_file = dir / "metadata.json";
  write_file(result.metadata_file, meta.dump(2) + "\n");
  return result;
}

Figure1Data emit_figure1(const ExperimentConfig& config) {
  Figure1Options options;
  options.grid_size = config.figure1.grid_size;
  options.history_size = config.figure1.history_size;
  options.fantasies = config.figure1.fantasies;
  options.length_scale = config.figure1.length_scale;
  const Figure1Data data = figure1_scenario(config.seed, options);

  const fs::path dir(config.output_dir);
  fs::create_directories(dir);
  std::ostringstream csv;
  csv << "x,truth,truth_gradient,mean_values,sd_values,mean_gradients,sd_gradients,kg,kg_se,dkg,dkg_se,ei,dei,"
         "after_kg_mean,after_kg_sd,after_dkg_mean,after_dkg_sd,after_ei_mean,after_ei_sd,after_dei_mean,after_dei_sd\n";
  for (Index i = 0; i < data.grid.size(); ++i) {
    const double row[] = {data.grid[i], data.truth[i], data.truth_gradient[i], data.without_gradients.mean[i],
                          data.without_gradients.sd[i], data.with_gradients.mean[i], data.with_gradients.sd[i],
                          data.kg[i], data.kg_se[i], data.dkg[i], data.dkg_se[i], data.ei[i], data.dei[i],
                          data.after_kg.mean[i], data.after_kg.sd[i], data.after_dkg.mean[i], data.after_dkg.sd[i],
                          data.after_ei.mean[i], data.after_ei.sd[i], data.after_dei.mean[i], data.after_dei.sd[i]};
    for (std::size_t k = 0; k < std::size(row); ++k) csv << (k ? "," : "") << fmt(row[k]);
    csv << '\n';
  }
  write_file(dir / "figure1_curves.csv", csv.str());

  json summary;
  summary["seed"] = config.seed;
  summary["history_x"] = data.history_x;
  summary["selected"] = {{"kg", data.grid[data.kg_choice]},
                         {"dkg", data.grid[data.dkg_choice]},
                         {"ei", data.grid[data.ei_choice]},
                         {"dei", data.grid[data.dei_choice]}};
  write_file(dir / "figure1_summary.json", summary.dump(2) + "\n");
  return data;
}

}  // namespace dkg
