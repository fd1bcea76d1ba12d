#pragma once

// Building training sets by querying a black-box predictor, either an
// in-process analytic one or an external process speaking the line-delimited
// JSON probe protocol on its standard input/output:
//
//   server banner  {"protocol":"flm-probe","version":1,"task":"image_to_scalar"}
//   request        {"id":<u64>,"nx":28,"ny":28,"input":[f64 row-major ...]}
//   response       {"id":<u64>,"output":[f64 ...]}
//
// The client closes the server's input to end the session.

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <optional>
#include <regex>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "flm/model.hpp"
#include "flm/synth.hpp"

namespace flm {

struct AnalyticEndpoint {
  FunctionalLinearModel model;
};

struct ExternalEndpoint {
  std::vector<std::string> argv;
  std::string workdir;
  double timeout_s = 30.0;
};

using PredictorEndpoint = std::variant<AnalyticEndpoint, ExternalEndpoint>;

/// Deterministic stand-in for a trained network: responds with sum w * term(f)
/// using the library quadrature.
inline PredictorEndpoint builtin_analytic_predictor(std::span<const TermSpec> terms, std::span<const double> coeffs) {
  if (terms.empty()) fail(ErrorKind::Usage, "analytic predictor needs at least one term");
  if (terms.size() != coeffs.size()) fail(ErrorKind::Usage, "terms and coefficients differ in length");
  std::vector<WeightedTerm> wts;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    if (terms[i].task != terms.front().task) fail(ErrorKind::Data, "analytic predictor terms mix tasks");
    if (coeffs[i] != 0.0) wts.push_back({terms[i], coeffs[i]});
  }
  return AnalyticEndpoint{FunctionalLinearModel(terms.front().task, std::move(wts))};
}

struct ProbePlan {
  InputSampler sampler = SmoothSampler{};
  std::size_t Q = 1;
  std::uint64_t seed = 0;
  TaskKind task = TaskKind::ImageToScalar;
  Grid2D grid{28, 28};
  /// Output length for line tasks; 0 uses grid.nx().
  std::size_t line_n = 0;

  std::size_t output_size() const {
    switch (task) {
      case TaskKind::ImageToScalar: return 1;
      case TaskKind::ImageToLine: return line_n ? line_n : grid.nx();
      case TaskKind::ImageToImage: return grid.size();
    }
    return 0;
  }
};

struct ProtocolInfo {
  std::string protocol;
  int version = 0;
  TaskKind task = TaskKind::ImageToScalar;
};

/// Validates a server banner line against the task a plan expects.
inline ProtocolInfo parse_banner(const std::string& line, TaskKind expected) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception&) {
    fail(ErrorKind::Data, "handshake: malformed banner '" + line + "'");
  }
  if (!j.is_object() || !j.contains("protocol") || !j["protocol"].is_string() || !j.contains("version") ||
      !j["version"].is_number_integer() || !j.contains("task") || !j["task"].is_string())
    fail(ErrorKind::Data, "handshake: malformed banner '" + line + "'");
  ProtocolInfo info;
  info.protocol = j["protocol"].get<std::string>();
  info.version = j["version"].get<int>();
  if (info.protocol != "flm-probe") fail(ErrorKind::Data, "handshake: unknown protocol '" + info.protocol + "'");
  if (info.version != 1) fail(ErrorKind::Data, "handshake: protocol version " + std::to_string(info.version) +
                                                   " unsupported (need 1)");
  const std::string task = j["task"].get<std::string>();
  if (task != "image_to_scalar" && task != "image_to_line" && task != "image_to_image")
    fail(ErrorKind::Data, "handshake: malformed banner task '" + task + "'");
  info.task = parse_task(task);
  if (info.task != expected)
    fail(ErrorKind::Data, "handshake: task mismatch, predictor serves " + task + " but plan needs " +
                              std::string(to_string(expected)));
  return info;
}

/// A child process attached through a socket pair to its stdin and stdout.
class ChildProcess {
 public:
  ChildProcess(const std::vector<std::string>& argv, const std::string& workdir) {
    if (argv.empty()) fail(ErrorKind::Usage, "external predictor command is empty");
    int sv[2];
    if (::socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, sv) != 0)
      fail(ErrorKind::Data, std::string("socketpair failed: ") + std::strerror(errno));
    std::vector<char*> args;
    for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
    args.push_back(nullptr);
    pid_ = ::fork();
    if (pid_ < 0) {
      ::close(sv[0]);
      ::close(sv[1]);
      fail(ErrorKind::Data, std::string("fork failed: ") + std::strerror(errno));
    }
    if (pid_ == 0) {
      ::dup2(sv[1], STDIN_FILENO);
      ::dup2(sv[1], STDOUT_FILENO);
      if (!workdir.empty() && ::chdir(workdir.c_str()) != 0) ::_exit(126);
      ::execvp(args[0], args.data());
      ::_exit(127);
    }
    ::close(sv[1]);
    fd_ = sv[0];
  }

  ChildProcess(const ChildProcess&) = delete;
  ChildProcess& operator=(const ChildProcess&) = delete;

  ~ChildProcess() {
    if (fd_ >= 0) {
      ::shutdown(fd_, SHUT_WR);
      ::close(fd_);
    }
    if (pid_ > 0) reap(2.0);
  }

  /// Sends one line; false if the peer is gone.
  bool write_line(const std::string& line) {
    std::string data = line + "\n";
    std::size_t off = 0;
    while (off < data.size()) {
      const ssize_t n = ::send(fd_, data.data() + off, data.size() - off, MSG_NOSIGNAL);
      if (n < 0) {
        if (errno == EINTR) continue;
        return false;
      }
      off += static_cast<std::size_t>(n);
    }
    return true;
  }

  /// Next line, or nullopt at end of stream. Throws on timeout.
  std::optional<std::string> read_line(double timeout_s) {
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::duration<double>(timeout_s);
    for (;;) {
      if (auto nl = buffer_.find('\n'); nl != std::string::npos) {
        std::string line = buffer_.substr(0, nl);
        buffer_.erase(0, nl + 1);
        return line;
      }
      if (eof_) {
        if (buffer_.empty()) return std::nullopt;
        return std::exchange(buffer_, {});
      }
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
      if (left.count() <= 0) throw TimeoutError();
      pollfd p{fd_, POLLIN, 0};
      const int rc = ::poll(&p, 1, static_cast<int>(left.count()));
      if (rc < 0 && errno == EINTR) continue;
      if (rc == 0) throw TimeoutError();
      char chunk[65536];
      const ssize_t n = ::recv(fd_, chunk, sizeof chunk, 0);
      if (n < 0) {
        if (errno == EINTR) continue;
        eof_ = true;
      } else if (n == 0) {
        eof_ = true;
      } else {
        buffer_.append(chunk, static_cast<std::size_t>(n));
      }
    }
  }

  /// Closes the child's input and waits for it to exit; returns its status.
  int finish(double timeout_s) {
    if (fd_ >= 0) ::shutdown(fd_, SHUT_WR);
    const int status = reap(timeout_s);
    if (fd_ >= 0) {
      ::close(fd_);
      fd_ = -1;
    }
    return status;
  }

  /// Terminates the child without waiting for it to drain its input.
  void kill() {
    if (pid_ > 0) ::kill(pid_, SIGKILL);
    reap(2.0);
  }

  struct TimeoutError {};

 private:
  int reap(double timeout_s) {
    if (pid_ <= 0) return exit_status_;
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::duration<double>(timeout_s);
    int status = 0;
    for (;;) {
      const pid_t r = ::waitpid(pid_, &status, WNOHANG);
      if (r == pid_) break;
      if (r < 0) {
        status = 0;
        break;
      }
      if (std::chrono::steady_clock::now() >= deadline) {
        ::kill(pid_, SIGKILL);
        ::waitpid(pid_, &status, 0);
        break;
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
    pid_ = -1;
    exit_status_ = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return exit_status_;
  }

  pid_t pid_ = -1;
  int fd_ = -1;
  std::string buffer_;
  bool eof_ = false;
  int exit_status_ = -1;
};

namespace detail {

inline std::string last_good(std::size_t id) {
  return id == 0 ? "no successful request" : "last good id " + std::to_string(id - 1);
}

/// JSON has no spelling for inf or NaN; predictors emit either an overflowing
/// literal or the bare tokens many serializers produce.
inline bool has_nonfinite_token(const std::string& line) {
  static const std::regex re(R"([\[,:]\s*-?(NaN|Infinity)\s*[,\]}])");
  return std::regex_search(line, re);
}

inline Dataset probe_external(const ExternalEndpoint& ep, const ProbePlan& plan) {
  if (!(ep.timeout_s > 0.0)) fail(ErrorKind::Usage, "predictor timeout must be positive");
  ChildProcess child(ep.argv, ep.workdir);
  std::optional<std::string> banner;
  try {
    banner = child.read_line(ep.timeout_s);
  } catch (const ChildProcess::TimeoutError&) {
    child.kill();
    fail(ErrorKind::Data, "handshake: predictor sent no banner within timeout");
  }
  if (!banner) fail(ErrorKind::Data, "handshake: predictor exited before sending a banner");
  parse_banner(*banner, plan.task);

  const std::size_t out_n = plan.output_size();
  std::vector<Sample> samples;
  for (std::size_t id = 0; id < plan.Q; ++id) {
    Field2D f = draw_input(plan.sampler, plan.grid, plan.seed, id).field;
    const nlohmann::json req = {{"id", id},
                                {"nx", plan.grid.nx()},
                                {"ny", plan.grid.ny()},
                                {"input", std::vector<double>(f.values().begin(), f.values().end())}};
    if (!child.write_line(req.dump()))
      fail(ErrorKind::Data, "predictor session ended at request id " + std::to_string(id) + " (" + last_good(id) + ")");
    std::optional<std::string> line;
    try {
      line = child.read_line(ep.timeout_s);
    } catch (const ChildProcess::TimeoutError&) {
      child.kill();
      fail(ErrorKind::Data, "request id " + std::to_string(id) + " timed out");
    }
    if (!line)
      fail(ErrorKind::Data, "predictor exited during request id " + std::to_string(id) + " (" + last_good(id) + ")");
    nlohmann::json resp;
    try {
      resp = nlohmann::json::parse(*line);
    } catch (const nlohmann::json::out_of_range&) {
      fail(ErrorKind::Numerical, "request id " + std::to_string(id) + ": non-finite output");
    } catch (const nlohmann::json::exception&) {
      if (has_nonfinite_token(*line))
        fail(ErrorKind::Numerical, "request id " + std::to_string(id) + ": non-finite output");
      fail(ErrorKind::Data, "request id " + std::to_string(id) + ": malformed response");
    }
    if (!resp.is_object() || !resp.contains("id") || !resp["id"].is_number_unsigned())
      fail(ErrorKind::Data, "request id " + std::to_string(id) + ": response without id");
    const auto rid = resp["id"].get<std::uint64_t>();
    if (rid != id)
      fail(ErrorKind::Data, "request id " + std::to_string(id) + ": out-of-order response id " + std::to_string(rid));
    if (resp.contains("error"))
      fail(ErrorKind::Data, "request id " + std::to_string(id) + ": predictor error: " + resp["error"].dump());
    if (!resp.contains("output") || !resp["output"].is_array())
      fail(ErrorKind::Data, "request id " + std::to_string(id) + ": response without output array");
    std::vector<double> out;
    for (const auto& v : resp["output"]) {
      if (!v.is_number()) fail(ErrorKind::Data, "request id " + std::to_string(id) + ": non-numeric output");
      out.push_back(v.get<double>());
    }
    if (out.size() != out_n)
      fail(ErrorKind::Data, "request id " + std::to_string(id) + ": shape mismatch, expected " +
                                std::to_string(out_n) + " outputs, got " + std::to_string(out.size()));
    for (double v : out)
      if (!std::isfinite(v)) fail(ErrorKind::Numerical, "request id " + std::to_string(id) + ": non-finite output");
    samples.push_back({std::move(f), make_output(plan.task, std::move(out), plan.grid)});
  }
  child.finish(ep.timeout_s);
  return Dataset(plan.task, std::move(samples));
}

}  // namespace detail

/// Validates an external endpoint's banner without probing.
inline ProtocolInfo handshake(const ExternalEndpoint& ep, TaskKind expected) {
  ChildProcess child(ep.argv, ep.workdir);
  std::optional<std::string> banner;
  try {
    banner = child.read_line(ep.timeout_s);
  } catch (const ChildProcess::TimeoutError&) {
    child.kill();
    fail(ErrorKind::Data, "handshake: predictor sent no banner within timeout");
  }
  if (!banner) fail(ErrorKind::Data, "handshake: predictor exited before sending a banner");
  const ProtocolInfo info = parse_banner(*banner, expected);
  child.finish(ep.timeout_s);
  return info;
}

/// Queries the endpoint on Q inputs drawn from the plan's sampler.
inline Dataset probe(const PredictorEndpoint& endpoint, const ProbePlan& plan) {
  if (plan.Q == 0) fail(ErrorKind::Usage, "probe plan needs Q >= 1");
  if (const auto* ext = std::get_if<ExternalEndpoint>(&endpoint)) return detail::probe_external(*ext, plan);

  const auto& model = std::get<AnalyticEndpoint>(endpoint).model;
  if (model.task() != plan.task)
    fail(ErrorKind::Data, "analytic predictor serves " + std::string(to_string(model.task())) + " but plan needs " +
                              std::string(to_string(plan.task)));
  const OutputRequest req{plan.task, plan.task == TaskKind::ImageToLine ? plan.output_size() : 0,
                          plan.task == TaskKind::ImageToImage ? std::optional<Grid2D>(plan.grid) : std::nullopt};
  std::vector<Sample> samples;
  for (std::size_t id = 0; id < plan.Q; ++id) {
    Field2D f = draw_input(plan.sampler, plan.grid, plan.seed, id).field;
    Output out = predict(model, f, req);
    samples.push_back({std::move(f), std::move(out)});
  }
  return Dataset(plan.task, std::move(samples));
}

inline nlohmann::json probe_manifest(const PredictorEndpoint& endpoint, const ProbePlan& plan) {
  nlohmann::json ep;
  if (const auto* ext = std::get_if<ExternalEndpoint>(&endpoint))
    ep = {{"kind", "external"}, {"argv", ext->argv}, {"timeout_s", ext->timeout_s}};
  else
    ep = {{"kind", "analytic"}, {"model", model_to_json(std::get<AnalyticEndpoint>(endpoint).model)}};
  return {{"generator", "probe"},
          {"provenance", "nn-driven"},
          {"endpoint", ep},
          {"sampler", sampler_to_json(plan.sampler)},
          {"seed", plan.seed},
          {"count", plan.Q},
          {"task", to_string(plan.task)},
          {"grid", {{"nx", plan.grid.nx()}, {"ny", plan.grid.ny()}}}};
}

}  // namespace flm
