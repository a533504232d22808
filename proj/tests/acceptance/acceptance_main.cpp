// Copyright 2026 The shsteer Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero when any criterion fails.
//
//   acceptance --cli <path to shsteer> --work <scratch dir>

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <boost/asio/connect.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include "shsteer/shsteer.hpp"
#include "shsteer/teleop/server.hpp"

namespace fs = std::filesystem;
using namespace shsteer;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Context {
  fs::path cli;
  fs::path work;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v, int digits = 6) {
  std::ostringstream os;
  os.precision(digits);
  os << v;
  return os.str();
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

int run(const std::string& command) {
  const int status = std::system((command + " >/dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string quoted(const fs::path& p) { return "'" + p.string() + "'"; }

// Files under `dir`, relative path -> contents.
std::map<std::string, std::string> tree(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), dir).string()] = slurp(e.path());
  }
  return out;
}

// ---------------------------------------------------------------------------

Outcome guidance_oracle(const Context&) {
  const auto t0 = Clock::now();
  const GuidanceConfig g;
  PreviewErrors e;
  e.e_y_near = 0.5;
  e.e_theta_far = 0.1;
  const double t = guidance_torque(e, 1.0, g);
  const double oracle = 0.19 * 0.5 + 3.8 * 0.1;
  e.e_y_near = 10.0;
  e.e_theta_far = 1.0;
  const double raw = raw_guidance_torque(e, 1.0, g);
  const double capped = guidance_torque(e, 1.0, g);
  const double elapsed = seconds_since(t0);
  const bool ok = std::abs(t - oracle) <= 1e-12 && std::abs(raw - 5.7) < 1e-12 && capped == 5.0 && elapsed < 1.0;
  return {ok, "T=" + fmt(t, 17) + ", clamp " + fmt(raw) + " -> " + fmt(capped)};
}

Outcome authority_table(const Context&) {
  int checked = 0;
  int wrong = 0;
  for (double r : {0.0, 0.25, 0.5, 0.75, 1.0, 1.2}) {
    const double expect[] = {0.0, 1.0, 0.5, r >= 1.0 ? 0.0 : 1.0 - r, r >= 1.0 ? 1.0 : r};
    for (std::size_t m = 0; m < kAllModes.size(); ++m) {
      ++checked;
      if (authority_gain(kAllModes[m], r, std::nullopt, 1.0 / 600.0).gain != expect[m]) ++wrong;
    }
  }
  return {wrong == 0, std::to_string(checked - wrong) + "/" + std::to_string(checked) + " exact"};
}

Outcome mode_equivalence(const Context&) {
  const auto t0 = Clock::now();
  struct Pair {
    AuthorityMode adaptive;
    double grip;
    AuthorityMode fixed;
  };
  const Pair pairs[] = {{AuthorityMode::HGDecrease, 1.0, AuthorityMode::Manual},
                        {AuthorityMode::HGDecrease, 0.0, AuthorityMode::HGStrong},
                        {AuthorityMode::HGIncrease, 0.0, AuthorityMode::Manual},
                        {AuthorityMode::HGIncrease, 1.0, AuthorityMode::HGStrong}};
  int equal = 0;
  const TargetPath path = make_path(SimConfig{});
  for (const auto& p : pairs) {
    SimConfig a;
    a.emg_source = EmgSource::Ideal;
    a.guidance.gain_smoothing = 0.0;
    a.grip.sensitivity = 0.0;
    a.grip.baseline = p.grip;
    a.guidance.mode = p.adaptive;
    SimConfig b = a;
    b.guidance.mode = p.fixed;
    const auto subject = prepare_subject(a, 1);
    const auto la = run_trial(a, path, subject, 1);
    const auto lb = run_trial(b, path, subject, 1);
    std::ostringstream ea;
    std::ostringstream eb;
    write_envelope_csv(ea, la.emg_records);
    write_envelope_csv(eb, lb.emg_records);
    if (!la.meta.aborted && records_text(la) == records_text(lb) && ea.str() == eb.str()) ++equal;
  }
  const double elapsed = seconds_since(t0);
  return {equal == 4 && elapsed < 30.0, std::to_string(equal) + "/4 pairs identical in " + fmt(elapsed, 3) + " s"};
}

// The default batch, shared by the torque-cap and effort criteria.
struct DefaultBatch {
  fs::path dir;
  BatchResult result;
  double seconds = 0.0;
};

const DefaultBatch& default_batch(const Context& ctx) {
  static std::optional<DefaultBatch> batch;
  if (!batch) {
    DefaultBatch b;
    b.dir = ctx.work / "default_batch";
    fs::remove_all(b.dir);
    const auto t0 = Clock::now();
    b.result = run_batch_to_dir(ExperimentConfig{}, b.dir);
    b.seconds = seconds_since(t0);
    batch = std::move(b);
  }
  return *batch;
}

Outcome torque_cap(const Context& ctx) {
  const auto& b = default_batch(ctx);
  double worst = 0.0;
  std::size_t rows = 0;
  int files = 0;
  for (const auto& e : fs::directory_iterator(b.dir / "logs")) {
    const auto name = e.path().filename().string();
    if (name.size() < 5 || name.find(".emg.") != std::string::npos || e.path().extension() != ".csv") continue;
    std::ifstream is(e.path());
    for (const auto& r : read_records_csv(is)) {
      worst = std::max(worst, std::abs(r.haptic_torque));
      ++rows;
    }
    ++files;
  }
  return {files == 250 && worst <= 5.0,
          std::to_string(files) + " trials, " + std::to_string(rows) + " rows, max |Th| = " + fmt(worst) + " N m"};
}

Outcome effort_ordering(const Context& ctx) {
  const auto& b = default_batch(ctx);
  const auto means = subject_means(b.result.trials);
  std::map<int, std::map<AuthorityMode, double>> torque;
  for (const auto& m : means) torque[m.subject][m.condition] = m.values[0];
  int ordered = 0;
  double sum[3] = {0, 0, 0};
  for (auto& [subject, cells] : torque) {
    const double manual = cells[AuthorityMode::Manual];
    const double normal = cells[AuthorityMode::HGNormal];
    const double strong = cells[AuthorityMode::HGStrong];
    sum[0] += manual;
    sum[1] += normal;
    sum[2] += strong;
    if (manual > normal && normal > strong) ++ordered;
  }
  const double n = static_cast<double>(torque.size());
  return {ordered >= 9 && torque.size() == 10 && b.seconds < 120.0,
          std::to_string(ordered) + "/" + std::to_string(torque.size()) + " subjects; means Manual " +
              fmt(sum[0] / n, 4) + " > HG-Normal " + fmt(sum[1] / n, 4) + " > HG-Strong " + fmt(sum[2] / n, 4) +
              " N m; batch " + fmt(b.seconds, 3) + " s"};
}

Outcome guidance_convergence(const Context&) {
  SimConfig cfg;
  cfg.track_kind = TrackKind::Straight;
  const auto up = run_guidance_only(cfg, 0.5);
  const auto down = run_guidance_only(cfg, -0.5);
  double reached = -1.0;
  for (const auto& r : up.records) {
    if (std::abs(r.lane_offset) < 0.05) {
      reached = r.t;
      break;
    }
  }
  double mirror = 0.0;
  const bool same_length = up.records.size() == down.records.size();
  for (std::size_t i = 0; same_length && i < up.records.size(); ++i) {
    const auto& a = up.records[i];
    const auto& b = down.records[i];
    mirror = std::max({mirror, std::abs(a.x - b.x), std::abs(a.y + b.y), std::abs(a.psi + b.psi),
                       std::abs(a.lane_offset + b.lane_offset)});
  }
  return {!up.meta.aborted && reached >= 0.0 && reached <= 10.0 && same_length && mirror <= 1e-9,
          "|offset| < 0.05 m at t = " + fmt(reached, 4) + " s, mirror deviation " + fmt(mirror, 3)};
}

Outcome statistics_oracles(const Context&) {
  const auto hand = rm_anova({{1, 2}, {2, 3}, {3, 5}});
  std::mt19937_64 rng(2026);
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    Matrix m(3 + i % 8, std::vector<double>(2 + i % 4));
    for (auto& row : m)
      for (auto& v : row) v = u(rng);
    const auto r = rm_anova(m);
    worst = std::max(worst, std::abs(r.ss_condition + r.ss_subject + r.ss_error - r.ss_total) / r.ss_total);
  }
  const double q = studentized_range_quantile(0.05, 4, 36);
  const bool ok = std::abs(hand.f - 16.0) <= 1e-9 && std::abs(hand.p - 0.0572) <= 5e-4 && worst <= 1e-9 &&
                  std::abs(q - 3.809) <= 0.01;
  return {ok, "F = " + fmt(hand.f, 12) + ", p = " + fmt(hand.p, 5) + ", partition rel. error " + fmt(worst, 3) +
                  ", q(0.05,4,36) = " + fmt(q, 5)};
}

Outcome synthetic_metrics(const Context&) {
  const TrackLayout layout = TrackLayout::make_default();
  const double w = layout.lane_width;
  const auto lc1 = lane_change_bezier({layout.lc1_begin(), 0.0}, layout.lc1_end() - layout.lc1_begin(), w);
  const auto lc2 = lane_change_bezier({layout.lc2_begin(), w}, layout.lc2_end() - layout.lc2_begin(), -w);
  std::vector<StepRecord> recs;
  for (int i = 0; i * 5.0 <= layout.end_station(); ++i) {
    StepRecord r;
    r.x = i * 5.0;
    if (r.x > layout.lc1_begin() && r.x < layout.lc1_end()) {
      const auto p = eval_bezier(lc1, (r.x - layout.lc1_begin()) / (layout.lc1_end() - layout.lc1_begin()));
      r.y = p.position.y;
      r.psi = p.heading;
    } else if (r.x > layout.lc2_begin() && r.x < layout.lc2_end()) {
      const auto p = eval_bezier(lc2, (r.x - layout.lc2_begin()) / (layout.lc2_end() - layout.lc2_begin()));
      r.y = p.position.y;
      r.psi = p.heading;
    } else {
      r.y = (r.x >= layout.lc1_end() && r.x <= layout.lc2_begin()) ? w : 0.0;
    }
    r.driver_torque = 1.0;
    r.phi_deg = std::sin(static_cast<double>(i));
    recs.push_back(r);
  }
  recs[12].phi_deg = 10.0;
  recs[20].phi_deg = -20.0;
  const auto m = compute_trial_metrics(recs, layout);
  auto noisy = recs;
  const auto [lo, hi] = layout.maneuver_window();
  for (auto& r : noisy) {
    if (r.x < lo || r.x > hi) {
      r.driver_torque = 50.0;
      r.phi_deg = 300.0;
      r.y = -40.0;
    }
  }
  const bool invariant = compute_trial_metrics(noisy, layout) == m;
  const bool ok = m.rms_driver_torque == 1.0 && m.max_pos_swa == 10.0 && m.min_neg_swa == -20.0 &&
                  m.lateral_error_lc1 == 0.0 && m.lateral_error_lc2 == 0.0 && invariant;
  return {ok, "rms Td " + fmt(m.rms_driver_torque) + ", SWA [" + fmt(m.min_neg_swa) + ", " + fmt(m.max_pos_swa) +
                  "], lateral errors " + fmt(m.lateral_error_lc1) + "/" + fmt(m.lateral_error_lc2) +
                  (invariant ? ", window invariant" : ", window NOT invariant")};
}

Outcome semg_pipeline(const Context&) {
  EmgRecording sine;
  EmgRecording scaled;
  const double a = 0.6;
  for (int i = 0; i < 400; ++i) {
    EmgFrame f;
    f.t = i / 200.0;
    for (std::size_t c = 0; c < kEmgChannels; ++c) f.channels[c] = a * std::sin(2.0 * kPi * 20.0 * f.t + c);
    sine.push_back(f);
    for (auto& v : f.channels) v *= 3.0;
    scaled.push_back(f);
  }
  const auto env = rms_envelope(sine);
  const auto env3 = rms_envelope(scaled);
  double rms_err = 0.0;
  double equiv = 0.0;
  for (std::size_t i = 30; i < env.size(); ++i) {
    for (double v : env[i].channel_rms) rms_err = std::max(rms_err, std::abs(v - a / std::sqrt(2.0)));
  }
  for (std::size_t i = 0; i < env.size(); ++i) {
    equiv = std::max(equiv, std::abs(env3[i].activation - 3.0 * env[i].activation) / env3[i].activation);
  }
  const auto cal = calibration_from_reps({0.7, 0.8, 0.9});
  const double r = normalize(1.0, cal);
  const bool ok = rms_err <= 1e-9 && cal.reference == 0.8 && equiv <= 1e-12 && r == 1.25;
  return {ok, "sinusoid RMS error " + fmt(rms_err, 3) + ", sEMG_REF " + fmt(cal.reference, 17) +
                  ", scale deviation " + fmt(equiv, 3) + ", r(1.0) = " + fmt(r)};
}

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace websocket = beast::websocket;

// Drives one paced session over a real socket and returns the output dir.
fs::path record_teleop_session(const Context& ctx) {
  const fs::path out = ctx.work / "teleop_live";
  fs::remove_all(out);
  ExperimentConfig cfg;
  cfg.teleop.pace = 25.0;
  teleop::ServerOptions opts;
  opts.out_dir = out;
  opts.single_session = true;
  teleop::Server server(cfg, 0, opts);
  std::thread th([&] { server.run(); });
  try {
    asio::io_context io;
    websocket::stream<asio::ip::tcp::socket> ws(io);
    asio::ip::tcp::resolver resolver(io);
    asio::connect(ws.next_layer(), resolver.resolve("127.0.0.1", std::to_string(server.port())));
    ws.handshake("127.0.0.1", "/");
    const auto send = [&](const nlohmann::json& j) { ws.write(asio::buffer(j.dump())); };
    send({{"type", "input"}, {"start", true}, {"mode", "HG-Decrease"}, {"grip", 0.3}});
    int n = 0;
    for (;;) {
      beast::flat_buffer buffer;
      ws.read(buffer);
      const auto m = nlohmann::json::parse(beast::buffers_to_string(buffer.data()));
      if (m["type"] == "summary") break;
      if (++n % 10 == 0) send({{"type", "input"}, {"torque", 1.5 * std::sin(0.3 * n)}, {"grip", 0.3 + 0.002 * n}});
    }
    beast::error_code ec;
    ws.close(websocket::close_code::normal, ec);
  } catch (...) {
    server.stop();
    th.join();
    throw;
  }
  th.join();
  return out;
}

Outcome determinism(const Context& ctx) {
  const fs::path a = ctx.work / "determinism_a";
  const fs::path b = ctx.work / "determinism_b";
  fs::remove_all(a);
  fs::remove_all(b);
  const std::string cli = quoted(ctx.cli);
  const int ca = run(cli + " batch --seed 7 --out " + quoted(a));
  const int cb = run(cli + " batch --seed 7 --out " + quoted(b));
  const auto ta = tree(a);
  const auto tb = tree(b);
  const bool bundles = ca == 0 && cb == 0 && !ta.empty() && ta == tb;

  const fs::path live = record_teleop_session(ctx);
  const fs::path again = ctx.work / "teleop_replay";
  fs::remove_all(again);
  const int cr = run(cli + " replay --trace " + quoted(live / "session_001.trace.jsonl") + " --out " + quoted(again));
  bool logs = cr == 0;
  for (const char* ext : {".csv", ".meta.json", ".emg.csv"}) {
    const auto x = slurp(live / (std::string("session_001") + ext));
    logs = logs && !x.empty() && x == slurp(again / (std::string("session_001") + ext));
  }
  return {bundles && logs, std::to_string(ta.size()) + " bundle files " + (ta == tb ? "identical" : "DIFFER") +
                               "; replayed teleop log " + (logs ? "identical" : "DIFFERS")};
}

Outcome latin_squares_check(const Context&) {
  const auto orders = latin_squares(5, 10);
  const std::vector<ConditionOrder> first(orders.begin(), orders.begin() + 5);
  const std::vector<ConditionOrder> second(orders.begin() + 5, orders.end());
  const ConditionOrder reversed(orders[0].rbegin(), orders[0].rend());
  const bool ok = is_latin(first) && is_latin(second) && orders[5] == reversed;
  std::string s6;
  for (int c : orders[5]) s6 += std::to_string(c);
  return {ok, "both squares Latin: " + std::string(is_latin(first) && is_latin(second) ? "yes" : "no") +
                  ", subject 6 order " + s6};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"shsteer acceptance checks"};
  Context ctx;
  std::string cli;
  std::string work;
  app.add_option("--cli", cli, "path to the shsteer executable")->required();
  app.add_option("--work", work, "scratch directory")->required();
  CLI11_PARSE(app, argc, argv);
  ctx.cli = fs::absolute(cli);
  ctx.work = fs::absolute(work);
  fs::create_directories(ctx.work);

  const std::vector<std::pair<std::string, std::function<Outcome(const Context&)>>> criteria = {
      {"guidance torque oracle and clamp", guidance_oracle},
      {"authority law for all modes", authority_table},
      {"degenerate-mode trajectory equivalence", mode_equivalence},
      {"haptic torque cap over the default batch", torque_cap},
      {"driver effort ordering", effort_ordering},
      {"guidance-only convergence and mirror symmetry", guidance_convergence},
      {"statistics oracles", statistics_oracles},
      {"metrics on synthetic logs", synthetic_metrics},
      {"sEMG pipeline", semg_pipeline},
      {"determinism of batch bundles and teleop replay", determinism},
      {"Latin squares", latin_squares_check},
  };

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    const auto t0 = Clock::now();
    try {
      o = criteria[i].second(ctx);
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << i + 1 << ": " << criteria[i].first << " ("
              << o.detail << ") [" << fmt(seconds_since(t0), 3) << " s]" << std::endl;
  }
  std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed") << std::endl;
  return failed == 0 ? 0 : 1;
}
