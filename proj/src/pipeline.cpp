#include "softquad/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "softquad/checkpoint.hpp"
#include "softquad/error.hpp"

namespace softquad {

using nlohmann::json;

namespace {

constexpr std::uint64_t kEvalSeed = 1000;

std::ofstream open_out(const fs::path& p) {
  std::ofstream os(p);
  if (!os) throw std::runtime_error("cannot write '" + p.string() + "'");
  os << std::setprecision(9);
  return os;
}

}  // namespace

Manifest::Manifest(const ExperimentConfig& cfg, std::string command)
    : command_(std::move(command)), hash_(config_hash(cfg)), seeds_(cfg.seeds) {}

void Manifest::add_output(const fs::path& p) {
  const std::string s = p.filename().string();
  if (std::find(outputs_.begin(), outputs_.end(), s) == outputs_.end()) outputs_.push_back(s);
}

void Manifest::write(const fs::path& dir) const {
  json j;
  j["command"] = command_;
  j["config_hash"] = hash_;
  j["seeds"] = seeds_;
  j["version"] = "0.1.0";
  j["compiler"] = __VERSION__;
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::ostringstream ts;
  ts << std::put_time(std::gmtime(&now), "%Y-%m-%dT%H:%M:%SZ");
  j["timestamp"] = ts.str();
  j["outputs"] = outputs_;
  for (const auto& [k, v] : extra_) j[k] = v;
  std::string name = command_;
  std::replace(name.begin(), name.end(), ' ', '_');
  std::ofstream os(dir / ("manifest_" + name + ".json"));
  os << j.dump(2) << "\n";
}

namespace artifact {
std::string sac_stage(const std::string& stage, std::uint64_t seed) {
  return "sac_" + stage + "_seed" + std::to_string(seed) + ".ckpt";
}
std::string curve(std::uint64_t seed) { return "curve_seed" + std::to_string(seed) + ".txt"; }
}  // namespace artifact

EnvConfig at_incline(const EnvConfig& base, double incline_deg) {
  EnvConfig e = base;
  e.incline_deg = incline_deg;
  e.randomization.inclines_deg = {incline_deg};
  return e;
}

TactileOutcome run_calibrate_tactile(const ExperimentConfig& cfg, const fs::path& out, Manifest& m) {
  const auto& t = cfg.tactile;
  const PressCycleDataset data = generate_calibration_data(t.sensor, t.protocol, t.seed);
  write_dataset(data, (out / artifact::kTactileData).string());
  m.add_output(artifact::kTactileData);
  TactileOutcome o;
  o.estimator = train_force_estimator(data, t.training, &o.report);
  save_estimator(o.estimator, (out / artifact::kEstimator).string());
  m.add_output(artifact::kEstimator);
  auto os = open_out(out / artifact::kTactileMetrics);
  os << "# cycles train_samples validation_samples force_range_N rmse_N rmse_fraction r2 linear_rmse_N\n"
     << data.cycle_count() << ' ' << o.report.train_samples << ' ' << o.report.validation_samples << ' '
     << o.report.force_range << ' ' << o.report.rmse << ' ' << o.report.rmse / o.report.force_range << ' '
     << o.report.r2 << ' ' << o.report.baseline_rmse << '\n';
  m.add_output(artifact::kTactileMetrics);
  return o;
}

void write_demonstrations(const learn::Demonstrations& d, const fs::path& path) {
  auto os = open_out(path);
  os << std::setprecision(17);
  os << "# episode step obs[136] action[16]\n";
  for (std::size_t i = 0; i < d.size(); ++i) {
    os << d.episode[i] << ' ' << d.step[i];
    for (double x : d.obs[i]) os << ' ' << x;
    for (double x : d.action[i]) os << ' ' << x;
    os << '\n';
  }
}

learn::Demonstrations read_demonstrations(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read '" + path.string() + "'");
  learn::Demonstrations d;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    int e = 0, s = 0;
    ls >> e >> s;
    std::vector<double> obs(kObsDim), act(kActionDim);
    for (double& x : obs) ls >> x;
    for (double& x : act) ls >> x;
    if (!ls) throw std::runtime_error("malformed demonstration row in '" + path.string() + "'");
    d.episode.push_back(e);
    d.step.push_back(s);
    d.obs.push_back(std::move(obs));
    d.action.push_back(std::move(act));
  }
  return d;
}

nn::Mlp<float> load_actor(const fs::path& path) {
  const auto ck = Checkpoint<float>::load(path.string());
  if (ck.has_network("actor")) return ck.network("actor");
  if (ck.has_network("sac.actor")) return ck.network("sac.actor");
  throw CheckpointError("'" + path.string() + "' holds no actor network");
}

void save_actor(const nn::Mlp<float>& actor, const fs::path& path) {
  Checkpoint<float> ck;
  ck.put_network("actor", actor);
  ck.save(path.string());
}

BcOutcome run_train_bc(const ExperimentConfig& cfg, const fs::path& out, Manifest& m) {
  const fs::path demo_path = out / artifact::kDemos;
  learn::Demonstrations demos;
  if (fs::exists(demo_path)) {
    demos = read_demonstrations(demo_path);
  } else {
    demos = learn::collect_demonstrations(cfg.env, cfg.schedule.demo_episodes, cfg.seeds.front(),
                                          cfg.schedule.workers);
    write_demonstrations(demos, demo_path);
  }
  m.add_output(artifact::kDemos);
  BcOutcome o;
  o.demos = static_cast<int>(demos.size());
  o.discarded = demos.discarded;
  std::mt19937_64 rng(learn::derive_seed(cfg.seeds.front(), 20, 0));
  o.actor = learn::make_actor<float>(kObsDim, kActionDim, cfg.sac.actor_hidden, cfg.sac.hidden_activation, rng);
  o.report = learn::behavior_clone(demos, o.actor, cfg.bc, learn::derive_seed(cfg.seeds.front(), 21, 0));
  save_actor(o.actor, out / artifact::kBcActor);
  m.add_output(artifact::kBcActor);
  auto os = open_out(out / artifact::kBcMetrics);
  os << "# samples discarded_episodes train_samples validation_samples train_mse validation_mse "
        "linear_validation_mse\n"
     << o.demos << ' ' << o.discarded << ' ' << o.report.train_samples << ' ' << o.report.validation_samples << ' '
     << o.report.train_mse << ' ' << o.report.validation_mse << ' ' << o.report.linear_validation_mse << '\n';
  m.add_output(artifact::kBcMetrics);
  return o;
}

namespace {

// Runs one SAC stage with periodic checkpoints and progressive curve output.
std::vector<learn::CurveRecord> run_stage(const ExperimentConfig& cfg, learn::SacAgent<float>& agent,
                                          learn::ReplayBuffer<float>& buffer, const learn::SacLoopConfig& loop,
                                          const EnvConfig& env, std::uint64_t seed, const fs::path& out,
                                          std::ofstream& curve_os, bool verbose) {
  const auto t0 = std::chrono::steady_clock::now();
  auto on_episode = [&](const learn::CurveRecord& r) {
    learn::write_curve_record(curve_os, static_cast<int>(seed), r);
    curve_os.flush();
    if ((r.episode + 1) % cfg.schedule.checkpoint_every == 0) {
      Checkpoint<float> ck;
      agent.save(ck, "sac");
      ck.put_scalars("progress", {double(r.episode + 1)});
      ck.save((out / artifact::sac_stage("latest", seed)).string());
    }
    if (verbose) {
      const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      std::cerr << "seed " << seed << " episode " << r.episode << " return " << r.ret << " speed "
                << r.speed * 1000.0 << " mm/s" << (r.actor_frozen ? " (warm-up)" : "") << " [" << std::fixed
                << std::setprecision(0) << dt << " s]" << std::defaultfloat << std::setprecision(6) << "\n";
    }
  };
  try {
    return learn::sac_train<float>(learn::locomotion_factory(env), agent, buffer, loop, on_episode);
  } catch (const TrainingError&) {
    Checkpoint<float> ck;
    agent.save(ck, "sac");
    ck.save((out / artifact::sac_stage("abort", seed)).string());
    throw;
  }
}

}  // namespace

SacOutcome run_train_sac(const ExperimentConfig& cfg, const nn::Mlp<float>& bc_actor, std::uint64_t seed,
                         const fs::path& out, Manifest& m, bool verbose) {
  learn::SacAgent<float> agent(kObsDim, kActionDim, cfg.sac, learn::derive_seed(seed, 10, 0));
  agent.set_actor(bc_actor);
  learn::ReplayBuffer<float> buffer(cfg.loop.buffer_capacity, kObsDim, kActionDim);
  SacOutcome o;

  const fs::path curve_path = out / artifact::curve(seed);
  const fs::path flat_path = out / artifact::sac_stage("flat", seed);
  const fs::path final_path = out / artifact::sac_stage("refined", seed);
  const bool have_flat = fs::exists(flat_path);
  const bool have_final = fs::exists(final_path);

  std::vector<learn::CurveRecord> previous;
  if (have_flat && fs::exists(curve_path)) previous = read_curve(curve_path);
  std::ofstream curve_os;
  if (!have_flat) {
    curve_os.open(curve_path);
    learn::write_curve_header(curve_os);
  } else {
    // Keep the flat-stage records and drop any partial refinement.
    const int flat = cfg.schedule.flat();
    std::erase_if(previous, [&](const learn::CurveRecord& r) { return r.episode >= flat && !have_final; });
    curve_os.open(curve_path);
    learn::write_curve_header(curve_os);
    for (const auto& r : previous) learn::write_curve_record(curve_os, static_cast<int>(seed), r);
  }
  curve_os << std::setprecision(9);
  if (!curve_os) throw std::runtime_error("cannot write '" + curve_path.string() + "'");
  m.add_output(curve_path);
  o.curve = previous;

  learn::SacLoopConfig loop = cfg.loop;
  loop.seed = seed;
  loop.workers = cfg.schedule.workers;

  if (have_flat) {
    agent.load(Checkpoint<float>::load(flat_path.string()), "sac");
  } else {
    loop.episodes = cfg.schedule.flat();
    loop.first_episode = 0;
    const auto c = run_stage(cfg, agent, buffer, loop, at_incline(cfg.env, 0.0), seed, out, curve_os, verbose);
    o.curve.insert(o.curve.end(), c.begin(), c.end());
    Checkpoint<float> ck;
    agent.save(ck, "sac");
    ck.save(flat_path.string());
  }
  m.add_output(flat_path);
  o.flat_actor = agent.actor();

  if (have_final) {
    agent.load(Checkpoint<float>::load(final_path.string()), "sac");
  } else {
    loop.episodes = cfg.schedule.incline();
    loop.first_episode = cfg.schedule.flat();
    loop.warmup_episodes = 0;
    loop.critic_lr_decay_episodes = 0;
    // Incline data only.
    buffer = learn::ReplayBuffer<float>(cfg.loop.buffer_capacity, kObsDim, kActionDim);
    const auto c = run_stage(cfg, agent, buffer, loop, at_incline(cfg.env, cfg.schedule.refine_incline_deg), seed,
                             out, curve_os, verbose);
    o.curve.insert(o.curve.end(), c.begin(), c.end());
    Checkpoint<float> ck;
    agent.save(ck, "sac");
    ck.save(final_path.string());
  }
  m.add_output(final_path);
  o.refined_actor = agent.actor();
  const fs::path latest = out / artifact::sac_stage("latest", seed);
  if (fs::exists(latest)) fs::remove(latest);
  return o;
}

std::vector<learn::CurveRecord> read_curve(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read '" + path.string() + "'");
  std::vector<learn::CurveRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    learn::CurveRecord r;
    int seed = 0, fell = 0, frozen = 0;
    ls >> seed >> r.episode >> r.ret >> r.steps >> fell >> r.speed >> frozen >> r.critic_lr >> r.critic_loss >>
        r.actor_loss >> r.alpha >> r.entropy >> r.updates;
    if (!ls) throw std::runtime_error("malformed curve row in '" + path.string() + "'");
    r.fell = fell != 0;
    r.actor_frozen = frozen != 0;
    out.push_back(r);
  }
  return out;
}

std::vector<double> smooth(const std::vector<double>& x, int window) {
  std::vector<double> out(x.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    acc += x[i];
    if (i >= static_cast<std::size_t>(window)) acc -= x[i - window];
    out[i] = acc / static_cast<double>(std::min<std::size_t>(i + 1, window));
  }
  return out;
}

Fig5Table fig5_table(const std::vector<std::vector<learn::CurveRecord>>& curves, int window) {
  Fig5Table t;
  if (curves.empty()) return t;
  std::size_t n = curves.front().size();
  for (const auto& c : curves) n = std::min(n, c.size());
  for (std::size_t e = 0; e < n; ++e) t.episode.push_back(curves.front()[e].episode);
  for (const auto& c : curves) {
    std::vector<double> r;
    for (std::size_t e = 0; e < n; ++e) r.push_back(c[e].ret);
    t.per_seed.push_back(r);
  }
  t.mean.assign(n, 0.0);
  for (const auto& r : t.per_seed)
    for (std::size_t e = 0; e < n; ++e) t.mean[e] += r[e] / t.per_seed.size();
  t.smoothed = smooth(t.mean, window);
  return t;
}

void write_fig5(const Fig5Table& t, const std::vector<std::uint64_t>& seeds, const fs::path& path) {
  if (seeds.size() != t.per_seed.size()) throw std::invalid_argument("write_fig5: one seed per curve");
  auto os = open_out(path);
  os << "# episode";
  for (auto s : seeds) os << " return_seed" << s;
  os << " mean_return smoothed_mean_return\n";
  for (std::size_t e = 0; e < t.episode.size(); ++e) {
    os << t.episode[e];
    for (const auto& r : t.per_seed) os << ' ' << r[e];
    os << ' ' << t.mean[e] << ' ' << t.smoothed[e] << '\n';
  }
}

std::vector<Fig7Row> fig7_table(const ExperimentConfig& cfg, const nn::Mlp<float>& bc,
                                const std::vector<nn::Mlp<float>>& flat, const std::vector<nn::Mlp<float>>& refined,
                                int workers) {
  std::vector<Fig7Row> rows;
  const int n = cfg.schedule.eval_episodes;
  auto mean_over = [&](const std::vector<nn::Mlp<float>>& actors, const EnvConfig& env, double* falls) {
    double s = 0.0, f = 0.0;
    for (const auto& a : actors) {
      const auto m = learn::evaluate_policy(env, a, n, kEvalSeed, workers);
      s += m.mean_speed;
      f += m.fall_rate;
    }
    if (falls) *falls = actors.empty() ? 0.0 : f / actors.size();
    return actors.empty() ? 0.0 : s / actors.size();
  };
  for (double inc : cfg.schedule.eval_inclines_deg) {
    const EnvConfig env = at_incline(cfg.env, inc);
    Fig7Row r;
    r.incline_deg = inc;
    r.reference = learn::evaluate_reference_gait(env, n, kEvalSeed, workers).mean_speed;
    r.bc = learn::evaluate_policy(env, bc, n, kEvalSeed, workers).mean_speed;
    r.rl_flat = mean_over(flat, env, nullptr);
    r.rl_refined = mean_over(refined, env, &r.rl_refined_fall_rate);
    rows.push_back(r);
  }
  return rows;
}

void write_fig7(const std::vector<Fig7Row>& rows, const fs::path& path) {
  auto os = open_out(path);
  os << "# incline_deg reference_mm_s bc_mm_s rl_flat_mm_s rl_refined_mm_s rl_refined_fall_rate\n";
  for (const auto& r : rows)
    os << r.incline_deg << ' ' << r.reference * 1e3 << ' ' << r.bc * 1e3 << ' ' << r.rl_flat * 1e3 << ' '
       << r.rl_refined * 1e3 << ' ' << r.rl_refined_fall_rate << '\n';
}

void write_metrics(const learn::EvalMetrics& m, const std::string& label, const fs::path& path) {
  auto os = open_out(path);
  os << "# label episodes mean_speed_mm_s mean_tilt_rad fall_rate mean_return\n";
  os << label << ' ' << m.speeds.size() << ' ' << m.mean_speed * 1e3 << ' ' << m.mean_tilt << ' ' << m.fall_rate
     << ' ' << m.mean_return << '\n';
  os << "# episode speed_mm_s\n";
  for (std::size_t i = 0; i < m.speeds.size(); ++i) os << i << ' ' << m.speeds[i] * 1e3 << '\n';
}

}  // namespace softquad
