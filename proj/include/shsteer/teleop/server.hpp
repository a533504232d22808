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

#pragma once

#include <atomic>
#include <chrono>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <string>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include "shsteer/teleop/session.hpp"

namespace shsteer::teleop {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace websocket = boost::beast::websocket;
using tcp = asio::ip::tcp;

struct ServerOptions {
  std::filesystem::path out_dir;        // traces and logs; empty disables
  bool single_session = false;          // stop after the first session ends
  std::function<void(const std::string&)> on_log;
};

// Paced WebSocket front end for one Session at a time. All networking and
// simulation run on one io_context thread; the read handler only replaces
// the pending input, and the pacing timer is the sole simulation owner.
class Server {
 public:
  Server(const ExperimentConfig& cfg, unsigned short port, ServerOptions options = {})
      : cfg_(cfg),
        options_(std::move(options)),
        acceptor_(io_, tcp::endpoint(asio::ip::make_address("127.0.0.1"), port)),
        tick_timer_(io_),
        expiry_timer_(io_) {
    cfg_.validate();
  }

  unsigned short port() const { return acceptor_.local_endpoint().port(); }
  int sessions_completed() const { return completed_.load(); }

  // Serves until stop(); returns after the io_context drains.
  void run() {
    do_accept();
    next_tick_ = std::chrono::steady_clock::now();
    schedule_tick();
    io_.run();
  }

  // Safe to call from any thread.
  void stop() {
    asio::post(io_, [this] { shutdown("closed"); });
  }

 private:
  struct Client {
    explicit Client(tcp::socket socket) : ws(std::move(socket)) {
      ws.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    }
    websocket::stream<beast::tcp_stream> ws;
    beast::flat_buffer buffer;
    std::deque<std::string> outbox;
    bool writing = false;
    bool open = true;
    bool close_when_flushed = false;
  };

  void log(const std::string& line) {
    if (options_.on_log) options_.on_log(line);
  }

  std::chrono::steady_clock::duration tick_period() const {
    const double seconds = 1.0 / (cfg_.teleop.broadcast_rate * cfg_.teleop.pace);
    return std::chrono::duration_cast<std::chrono::steady_clock::duration>(std::chrono::duration<double>(seconds));
  }

  void do_accept() {
    acceptor_.async_accept([this](beast::error_code ec, tcp::socket socket) {
      if (ec) return;  // acceptor closed
      auto c = std::make_shared<Client>(std::move(socket));
      c->ws.async_accept([this, c](beast::error_code aec) {
        if (aec) return;
        if (client_) {
          send(c, error_message("session busy: one client per session"));
          c->open = false;
          return;
        }
        attach(c);
      });
      do_accept();
    });
  }

  void attach(const std::shared_ptr<Client>& c) {
    client_ = c;
    expiry_timer_.cancel();
    if (!session_) session_ = std::make_unique<Session>(cfg_);
    paused_ = false;
    log("client connected");
    send(c, session_->hello());
    do_read(c);
  }

  void do_read(const std::shared_ptr<Client>& c) {
    c->ws.async_read(c->buffer, [this, c](beast::error_code ec, std::size_t) {
      if (ec) {
        detach(c);
        return;
      }
      const std::string text = beast::buffers_to_string(c->buffer.data());
      c->buffer.consume(c->buffer.size());
      on_message(c, text);
      do_read(c);
    });
  }

  void on_message(const std::shared_ptr<Client>& c, const std::string& text) {
    InputFrame f;
    try {
      f = parse_input(std::string_view(text));
    } catch (const Error& e) {
      send(c, error_message(e.what()));
      return;
    }
    if (session_ && session_->phase() == Phase::Finished) {
      if (!f.reset) return;
      session_ = std::make_unique<Session>(cfg_);
      send(c, session_->hello());
    }
    // Single-slot mailbox. Control flags survive being overwritten.
    if (pending_) {
      f.start = f.start || pending_->start;
      f.reset = f.reset || pending_->reset;
      if (!f.mode) f.mode = pending_->mode;
    }
    pending_ = f;
  }

  void detach(const std::shared_ptr<Client>& c) {
    c->open = false;
    if (client_ != c) return;
    client_.reset();
    pending_.reset();
    paused_ = true;
    log("client disconnected; session paused");
    if (!session_) return;
    const auto timeout = std::chrono::duration<double>(cfg_.teleop.disconnect_timeout);
    expiry_timer_.expires_after(std::chrono::duration_cast<std::chrono::steady_clock::duration>(timeout));
    expiry_timer_.async_wait([this](beast::error_code ec) {
      if (ec || client_ || !session_) return;
      log("session expired");
      session_->end("expired");
      finalize();
      session_.reset();
    });
  }

  void send(const std::shared_ptr<Client>& c, const json& message) {
    if (!c->open) return;
    c->outbox.push_back(message.dump());
    if (!c->writing) flush(c);
  }

  void flush(const std::shared_ptr<Client>& c) {
    if (c->outbox.empty() || !c->open) {
      c->writing = false;
      if (c->close_when_flushed && c->open) close_client(c);
      return;
    }
    c->writing = true;
    c->ws.text(true);
    c->ws.async_write(asio::buffer(c->outbox.front()), [this, c](beast::error_code ec, std::size_t) {
      c->outbox.pop_front();
      if (ec) {
        c->writing = false;
        return;
      }
      flush(c);
    });
  }

  void schedule_tick() {
    next_tick_ += tick_period();
    tick_timer_.expires_at(next_tick_);
    tick_timer_.async_wait([this](beast::error_code ec) {
      if (ec || stopped_) return;
      on_tick();
      schedule_tick();
    });
  }

  // One broadcast interval of simulation.
  void on_tick() {
    if (!session_ || paused_ || !client_) return;
    if (session_->phase() == Phase::Finished) return;
    if (pending_) {
      session_->apply(*pending_);
      pending_.reset();
    }
    for (int i = 0; i < session_->steps_per_broadcast() && session_->phase() == Phase::Running; ++i) {
      session_->advance();
    }
    if (session_->broadcast_due()) send(client_, session_->state());
    if (session_->phase() == Phase::Finished) {
      send(client_, session_->summary());
      finalize();
      if (options_.single_session) shutdown("finished");
    }
  }

  void finalize() {
    if (!session_ || finalized_ == session_.get()) return;
    finalized_ = session_.get();
    const int index = ++completed_;
    if (options_.out_dir.empty()) return;
    std::filesystem::create_directories(options_.out_dir);
    char stem[32];
    std::snprintf(stem, sizeof stem, "session_%03d", index);
    std::ofstream trace(options_.out_dir / (std::string(stem) + ".trace.jsonl"), std::ios::binary);
    write_trace(trace, session_->trace());
    write_trial_files(options_.out_dir, stem, session_->log());
    log(std::string("wrote ") + stem);
  }

  void shutdown(const std::string& reason) {
    if (stopped_) return;
    stopped_ = true;
    if (session_ && session_->phase() != Phase::Finished) {
      session_->end(reason);
      finalize();
    } else if (session_) {
      finalize();
    }
    beast::error_code ec;
    acceptor_.close(ec);
    tick_timer_.cancel();
    expiry_timer_.cancel();
    if (client_) {
      auto c = client_;
      client_.reset();
      // Let queued frames (the summary) go out before closing.
      if (c->writing) {
        c->close_when_flushed = true;
      } else {
        close_client(c);
      }
    }
  }

  void close_client(const std::shared_ptr<Client>& c) {
    c->open = false;
    c->ws.async_close(websocket::close_code::normal, [c](beast::error_code) {});
  }

  ExperimentConfig cfg_;
  ServerOptions options_;
  asio::io_context io_;
  tcp::acceptor acceptor_;
  asio::steady_timer tick_timer_;
  asio::steady_timer expiry_timer_;
  std::chrono::steady_clock::time_point next_tick_;
  std::shared_ptr<Client> client_;
  std::unique_ptr<Session> session_;
  const Session* finalized_ = nullptr;
  std::optional<InputFrame> pending_;
  bool paused_ = false;
  bool stopped_ = false;
  std::atomic<int> completed_{0};
};

}  // namespace shsteer::teleop
