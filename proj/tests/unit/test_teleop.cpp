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


#include <chrono>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include <boost/asio/connect.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>
#include <gtest/gtest.h>

#include "shsteer/teleop/server.hpp"

namespace fs = std::filesystem;

namespace shsteer::teleop {
namespace {

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

std::string emg_text(const TrialLog& log) {
  std::ostringstream os;
  write_envelope_csv(os, log.emg_records);
  return os.str();
}

// ---------------------------------------------------------------------------
// Protocol
// ---------------------------------------------------------------------------

TEST(Protocol, ParsesInput) {
  const auto f = parse_input(std::string_view(
      R"({"type":"input","client_time":1.5,"torque":-2.25,"grip":0.4,"start":true,"mode":"HG-Decrease"})"));
  EXPECT_EQ(f.client_time, 1.5);
  EXPECT_EQ(f.torque, -2.25);
  EXPECT_EQ(f.grip, 0.4);
  EXPECT_TRUE(f.start);
  EXPECT_FALSE(f.reset);
  EXPECT_EQ(f.mode, AuthorityMode::HGDecrease);
  EXPECT_EQ(parse_input(std::string_view(R"({"type":"input","axis":-0.5})")).torque, -7.5);
  const auto k = parse_input(std::string_view(R"({"type":"input","keys":{"left":true,"grip":true}})"));
  EXPECT_EQ(k.keys, (KeyState{true, false, true}));
}

TEST(Protocol, RoundTrip) {
  InputFrame f;
  f.client_time = 0.1 + 0.2;
  f.torque = 1.0 / 3.0;
  f.keys = KeyState{false, true, false};
  f.grip = 0.7;
  f.reset = true;
  f.mode = AuthorityMode::HGIncrease;
  EXPECT_EQ(parse_input(to_json(f)), f);
  EXPECT_EQ(parse_input(std::string_view(to_json(f).dump())), f);
  EXPECT_EQ(parse_input(to_json(InputFrame{})), InputFrame{});
}

TEST(Protocol, Rejections) {
  const char* format_errors[] = {
      "not json",
      "[1,2]",
      R"({"torque":1})",
      R"({"type":"state"})",
      R"({"type":"input","speed":3})",
      R"({"type":"input","torque":"1"})",
      R"({"type":"input","torque":1,"axis":0.1})",
      R"({"type":"input","keys":true})",
      R"({"type":"input","keys":{"left":1}})",
      R"({"type":"input","start":"yes"})",
      R"({"type":"input","mode":3})",
  };
  for (const char* text : format_errors) EXPECT_THROW(parse_input(std::string_view(text)), FormatError) << text;
  const char* input_errors[] = {
      R"({"type":"input","torque":15.5})",
      R"({"type":"input","axis":1.2})",
      R"({"type":"input","grip":-0.1})",
      R"({"type":"input","grip":1.3})",
      R"({"type":"input","mode":"Autopilot"})",
  };
  for (const char* text : input_errors) EXPECT_THROW(parse_input(std::string_view(text)), InputError) << text;
}

// ---------------------------------------------------------------------------
// Session
// ---------------------------------------------------------------------------

ExperimentConfig session_config(AuthorityMode mode = AuthorityMode::HGNormal) {
  ExperimentConfig cfg;
  cfg.sim.guidance.mode = mode;
  return cfg;
}

void run_to_end(Session& s) {
  while (s.phase() == Phase::Running) s.advance();
}

TEST(Session, WaitsForStart) {
  Session s(session_config());
  EXPECT_EQ(s.phase(), Phase::Waiting);
  for (int i = 0; i < 10; ++i) s.advance();
  EXPECT_EQ(s.tick(), 0);
  EXPECT_EQ(s.hello()["type"], "hello");
  EXPECT_EQ(s.hello()["config_hash"], s.config_hash());
  InputFrame go;
  go.start = true;
  s.apply(go);
  EXPECT_EQ(s.phase(), Phase::Running);
  for (int i = 0; i < 40; ++i) s.advance();
  EXPECT_EQ(s.tick(), 40);
  EXPECT_TRUE(s.broadcast_due());
}

TEST(Session, IdleClientMatchesZeroDriverTrial) {
  auto cfg = session_config(AuthorityMode::HGStrong);
  cfg.teleop.autostart = true;
  Session s(cfg);
  run_to_end(s);
  ASSERT_FALSE(s.log().meta.aborted);

  SimConfig sim = cfg.sim;
  sim.driver_enabled = false;
  sim.grip.baseline = 0.0;
  sim.grip.sensitivity = 0.0;
  const auto reference = run_trial(sim, prepare_subject(sim, 1), 1);
  EXPECT_EQ(records_text(s.log()), records_text(reference));
  EXPECT_EQ(emg_text(s.log()), emg_text(reference));
}

TEST(Session, HeldGripKeyRamps) {
  auto cfg = session_config();
  cfg.teleop.autostart = true;
  Session s(cfg);
  InputFrame f;
  f.keys = KeyState{false, false, true};
  s.apply(f);
  for (int i = 0; i < 300; ++i) s.advance();
  EXPECT_NEAR(s.state()["grip"].get<double>(), 0.5, 1e-12);
  for (int i = 0; i < 600; ++i) s.advance();
  EXPECT_EQ(s.state()["grip"].get<double>(), 1.0);
}

TEST(Session, HeldSteeringKeyRampsToCap) {
  auto cfg = session_config(AuthorityMode::Manual);
  cfg.teleop.autostart = true;
  Session s(cfg);
  InputFrame f;
  f.keys = KeyState{true, false, false};
  s.apply(f);
  for (int i = 0; i < 150; ++i) s.advance();  // 0.25 s at 4 N m/s
  EXPECT_NEAR(s.state()["Td"].get<double>(), 1.0, 0.01);
}

TEST(Session, DecreaseWithFullGripHasNoAuthority) {
  auto cfg = session_config(AuthorityMode::HGDecrease);
  cfg.sim.emg_source = EmgSource::Ideal;
  cfg.sim.guidance.gain_smoothing = 0.0;
  cfg.teleop.autostart = true;
  Session s(cfg);
  InputFrame f;
  f.grip = 1.0;
  s.apply(f);
  for (int i = 0; i < 600; ++i) s.advance();
  EXPECT_EQ(s.state()["K"].get<double>(), 0.0);
  EXPECT_EQ(s.state()["Th"].get<double>(), 0.0);
}

TEST(Session, ModeSwitchAndReset) {
  auto cfg = session_config(AuthorityMode::Manual);
  cfg.teleop.autostart = true;
  Session s(cfg);
  for (int i = 0; i < 100; ++i) s.advance();
  InputFrame f;
  f.mode = AuthorityMode::HGStrong;
  f.reset = true;
  s.apply(f);
  EXPECT_EQ(s.phase(), Phase::Running);
  EXPECT_EQ(s.state()["mode"], "HG-Strong");
  EXPECT_EQ(s.log().meta.condition, AuthorityMode::HGStrong);
  EXPECT_TRUE(s.log().records.empty());
}

TEST(Session, EndMarksTruncation) {
  auto cfg = session_config();
  cfg.teleop.autostart = true;
  Session s(cfg);
  for (int i = 0; i < 100; ++i) s.advance();
  s.end("closed");
  EXPECT_EQ(s.phase(), Phase::Finished);
  EXPECT_TRUE(s.log().meta.truncated);
  ASSERT_TRUE(s.trace().end.has_value());
  EXPECT_EQ(s.trace().end->reason, "closed");
  EXPECT_EQ(s.trace().end->tick, 100);
  EXPECT_FALSE(s.summary().contains("metrics"));
}

// ---------------------------------------------------------------------------
// Replay
// ---------------------------------------------------------------------------

// A scripted operator: steers, grips, switches mode once.
Session scripted_session(const ExperimentConfig& cfg, std::int64_t stop_after = -1) {
  Session s(cfg);
  InputFrame go;
  go.start = true;
  s.apply(go);
  std::int64_t i = 0;
  while (s.phase() == Phase::Running) {
    if (stop_after >= 0 && i == stop_after) {
      s.end("closed");
      break;
    }
    if (i % 20 == 0) {
      InputFrame f;
      f.client_time = static_cast<double>(i) / 600.0;
      f.torque = 2.0 * std::sin(static_cast<double>(i) / 900.0);
      if (i % 240 == 0) f.keys = KeyState{false, false, i % 480 == 0};
      if (i % 400 == 0) f.grip = 0.3 + 0.0005 * static_cast<double>(i % 1000);
      if (i == 3000) f.mode = AuthorityMode::HGIncrease;
      s.apply(f);
    }
    s.advance();
    ++i;
  }
  return s;
}

TEST(Replay, ReproducesLiveLog) {
  const auto cfg = session_config(AuthorityMode::HGDecrease);
  const Session live = scripted_session(cfg);
  ASSERT_EQ(live.phase(), Phase::Finished);
  ASSERT_FALSE(live.log().meta.aborted);
  std::stringstream trace_text;
  write_trace(trace_text, live.trace());
  const auto r = replay(read_trace(trace_text), cfg);
  EXPECT_FALSE(r.truncated);
  EXPECT_EQ(serialize(r.log), serialize(live.log()));
  EXPECT_EQ(r.summary, live.summary());
}

TEST(Replay, ClosedSessionReplaysToSameTick) {
  const auto cfg = session_config();
  const Session live = scripted_session(cfg, 2500);
  const auto r = replay(live.trace(), cfg);
  EXPECT_EQ(serialize(r.log), serialize(live.log()));
  EXPECT_TRUE(r.log.meta.truncated);
}

TEST(Replay, MissingEndRecordIsFlagged) {
  const auto cfg = session_config();
  const Session live = scripted_session(cfg, 1200);
  Trace cut = live.trace();
  cut.end.reset();
  const auto r = replay(cut, cfg);
  EXPECT_TRUE(r.truncated);
  EXPECT_TRUE(r.log.meta.truncated);
}

TEST(Replay, RefusesOtherConfig) {
  const auto cfg = session_config();
  const Session live = scripted_session(cfg, 200);
  auto other = cfg;
  other.sim.guidance.a1 = 0.2;
  EXPECT_THROW(replay(live.trace(), other), ReplayRefusedError);
  other = cfg;
  other.teleop.broadcast_rate = 60.0;
  EXPECT_THROW(replay(live.trace(), other), ReplayRefusedError);
}

TEST(Replay, InputIsHeldBetweenFrames) {
  auto cfg = session_config(AuthorityMode::Manual);
  cfg.teleop.autostart = true;
  Session s(cfg);
  InputFrame a;
  a.torque = 2.0;
  s.apply(a);
  for (int i = 0; i < 300; ++i) s.advance();
  InputFrame b;
  b.torque = -1.0;
  s.apply(b);
  for (int i = 0; i < 300; ++i) s.advance();
  const auto& recs = s.log().records;
  ASSERT_EQ(recs.size(), 120u);
  for (std::size_t i = 0; i < 60; ++i) EXPECT_EQ(recs[i].driver_torque, 2.0);
  for (std::size_t i = 60; i < 120; ++i) EXPECT_EQ(recs[i].driver_torque, -1.0);
  s.end("closed");
  EXPECT_EQ(serialize(replay(s.trace(), cfg).log), serialize(s.log()));
}

TEST(Trace, TornFinalLineIsTolerated) {
  const auto cfg = session_config();
  const Session live = scripted_session(cfg, 600);
  Trace t = live.trace();
  t.end.reset();
  std::ostringstream os;
  write_trace(os, t);
  std::istringstream torn(os.str() + R"({"tick": 640, "fra)");
  const auto back = read_trace(torn);
  ASSERT_EQ(back.events.size(), t.events.size());
  EXPECT_EQ(back.events.back().frame, t.events.back().frame);
  EXPECT_FALSE(back.end.has_value());

  std::istringstream corrupt(os.str() + "garbage\n" + R"({"type":"end","tick":700,"reason":"closed"})" + "\n");
  EXPECT_THROW(read_trace(corrupt), FormatError);
  std::istringstream headless(R"({"tick":1})");
  EXPECT_THROW(read_trace(headless), FormatError);
}

// ---------------------------------------------------------------------------
// WebSocket server
// ---------------------------------------------------------------------------

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace websocket = beast::websocket;

class Client {
 public:
  explicit Client(unsigned short port) : ws_(io_) {
    asio::ip::tcp::resolver resolver(io_);
    asio::connect(ws_.next_layer(), resolver.resolve("127.0.0.1", std::to_string(port)));
    ws_.handshake("127.0.0.1", "/");
  }

  json read() {
    beast::flat_buffer buffer;
    ws_.read(buffer);
    return json::parse(beast::buffers_to_string(buffer.data()));
  }

  void send(const std::string& text) { ws_.write(asio::buffer(text)); }

  void close() {
    beast::error_code ec;
    ws_.close(websocket::close_code::normal, ec);
  }

 private:
  asio::io_context io_;
  websocket::stream<asio::ip::tcp::socket> ws_;
};

TEST(Server, LiveSessionMatchesReplay) {
  const fs::path out = fs::path(testing::TempDir()) / "shsteer_server_live";
  fs::remove_all(out);
  auto cfg = session_config(AuthorityMode::HGStrong);
  cfg.teleop.pace = 25.0;
  ServerOptions opts;
  opts.out_dir = out;
  opts.single_session = true;
  Server server(cfg, 0, opts);
  std::thread th([&] { server.run(); });

  std::vector<json> states;
  json summary;
  {
    Client c(server.port());
    const json hello = c.read();
    EXPECT_EQ(hello["type"], "hello");
    EXPECT_EQ(hello["config_hash"], session_hash(cfg));

    c.send("{not json");
    EXPECT_EQ(c.read()["type"], "error");
    c.send(R"({"type":"input","torque":40})");
    EXPECT_EQ(c.read()["type"], "error");

    {
      Client second(server.port());
      const json busy = second.read();
      EXPECT_EQ(busy["type"], "error");
      EXPECT_NE(busy["message"].get<std::string>().find("busy"), std::string::npos);
    }

    c.send(R"({"type":"input","start":true,"keys":{"left":true}})");
    int sent = 0;
    for (;;) {
      const json m = c.read();
      if (m["type"] == "summary") {
        summary = m;
        break;
      }
      ASSERT_EQ(m["type"], "state");
      states.push_back(m);
      if (states.size() % 15 == 0) {
        const double v = 0.5 * std::sin(static_cast<double>(++sent));
        c.send(json{{"type", "input"}, {"torque", v}, {"grip", 0.25 + 0.5 * std::abs(v)}}.dump());
      }
    }
    c.close();
  }
  th.join();
  EXPECT_EQ(server.sessions_completed(), 1);
  ASSERT_FALSE(states.empty());
  EXPECT_FALSE(summary["aborted"].get<bool>());

  std::ifstream trace_file(out / "session_001.trace.jsonl", std::ios::binary);
  ASSERT_TRUE(trace_file.good());
  const auto r = replay(read_trace(trace_file), cfg);
  EXPECT_FALSE(r.truncated);
  ASSERT_EQ(r.states.size(), states.size());
  for (std::size_t i = 0; i < states.size(); ++i) ASSERT_EQ(r.states[i], states[i]) << i;
  EXPECT_EQ(r.summary, summary);

  std::ostringstream csv;
  write_records_csv(csv, r.log.records);
  EXPECT_EQ(slurp(out / "session_001.csv"), csv.str());
  EXPECT_EQ(slurp(out / "session_001.emg.csv"), emg_text(r.log));
  EXPECT_EQ(slurp(out / "session_001.meta.json"), meta_to_json(r.log.meta).dump(2) + "\n");
}

TEST(Server, BroadcastRateAtRealTime) {
  auto cfg = session_config();
  cfg.teleop.autostart = true;
  Server server(cfg, 0, {});
  std::thread th([&] { server.run(); });
  {
    Client c(server.port());
    ASSERT_EQ(c.read()["type"], "hello");
    ASSERT_EQ(c.read()["type"], "state");
    const auto t0 = std::chrono::steady_clock::now();
    const int frames = 30;
    for (int i = 0; i < frames; ++i) ASSERT_EQ(c.read()["type"], "state");
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const double mean_interval = elapsed / frames;
    EXPECT_NEAR(mean_interval, 1.0 / 30.0, 0.1 / 30.0);
    c.close();
  }
  server.stop();
  th.join();
}

TEST(Server, DisconnectPausesSession) {
  auto cfg = session_config();
  cfg.teleop.autostart = true;
  cfg.teleop.pace = 10.0;
  Server server(cfg, 0, {});
  std::thread th([&] { server.run(); });
  double t_before = 0.0;
  {
    Client c(server.port());
    c.read();
    for (int i = 0; i < 5; ++i) t_before = c.read()["t"].get<double>();
    c.close();
  }
  std::this_thread::sleep_for(std::chrono::milliseconds(300));
  {
    Client c(server.port());
    EXPECT_EQ(c.read()["type"], "hello");
    const double t_after = c.read()["t"].get<double>();
    // 0.3 s away at pace 10 would be 3 s of simulated time if it kept running.
    EXPECT_LT(t_after - t_before, 1.0);
    c.close();
  }
  server.stop();
  th.join();
}

}  // namespace
}  // namespace shsteer::teleop
