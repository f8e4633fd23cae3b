#pragma once

// Scoring through an external command (POSIX). The command reads the matrix
// CSV (no label column) on stdin and prints one probability per line.

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <mutex>
#include <sstream>
#include <string>
#include <vector>

#include "popx/common.hpp"
#include "popx/models.hpp"
#include "popx/preprocess.hpp"

namespace popx {

struct ProcessResult {
  int exit_code = -1;
  bool timed_out = false;
  std::string out;
  std::string err;
};

namespace detail {

class Fd {
 public:
  Fd() = default;
  explicit Fd(int fd) : fd_(fd) {}
  Fd(const Fd&) = delete;
  Fd& operator=(const Fd&) = delete;
  Fd(Fd&& o) noexcept : fd_(o.release()) {}
  Fd& operator=(Fd&& o) noexcept {
    reset(o.release());
    return *this;
  }
  ~Fd() { reset(); }
  int get() const { return fd_; }
  int release() { return std::exchange(fd_, -1); }
  void reset(int fd = -1) {
    if (fd_ >= 0) ::close(fd_);
    fd_ = fd;
  }

 private:
  int fd_ = -1;
};

inline void make_pipe(Fd& read_end, Fd& write_end) {
  int fds[2];
  if (::pipe2(fds, O_CLOEXEC) != 0) throw Error(std::string("pipe: ") + std::strerror(errno));
  read_end.reset(fds[0]);
  write_end.reset(fds[1]);
}

}  // namespace detail

/// Runs `/bin/sh -c command`, feeding `input` to stdin and collecting stdout and
/// stderr. The child is killed once `timeout_seconds` elapse.
inline ProcessResult run_process(const std::string& command, const std::string& input, double timeout_seconds) {
  static std::once_flag sigpipe_once;
  std::call_once(sigpipe_once, [] { ::signal(SIGPIPE, SIG_IGN); });

  detail::Fd in_r, in_w, out_r, out_w, err_r, err_w;
  detail::make_pipe(in_r, in_w);
  detail::make_pipe(out_r, out_w);
  detail::make_pipe(err_r, err_w);

  const pid_t pid = ::fork();
  if (pid < 0) throw Error(std::string("fork: ") + std::strerror(errno));
  if (pid == 0) {
    ::dup2(in_r.get(), 0);
    ::dup2(out_w.get(), 1);
    ::dup2(err_w.get(), 2);
    ::signal(SIGPIPE, SIG_DFL);
    ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    ::_exit(127);
  }
  in_r.reset();
  out_w.reset();
  err_w.reset();
  ::fcntl(in_w.get(), F_SETFL, O_NONBLOCK);

  ProcessResult result;
  std::size_t written = 0;
  if (input.empty()) in_w.reset();
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::duration<double>(timeout_seconds);
  char buf[65536];
  while (out_r.get() >= 0 || err_r.get() >= 0) {
    pollfd fds[3];
    nfds_t n = 0;
    if (in_w.get() >= 0) fds[n++] = {in_w.get(), POLLOUT, 0};
    if (out_r.get() >= 0) fds[n++] = {out_r.get(), POLLIN, 0};
    if (err_r.get() >= 0) fds[n++] = {err_r.get(), POLLIN, 0};
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0) {
      result.timed_out = true;
      break;
    }
    const int rc = ::poll(fds, n, static_cast<int>(std::min<long long>(left.count(), 1000)));
    if (rc < 0) {
      if (errno == EINTR) continue;
      throw Error(std::string("poll: ") + std::strerror(errno));
    }
    for (nfds_t i = 0; i < n; ++i) {
      if (fds[i].revents == 0) continue;
      if (fds[i].fd == in_w.get()) {
        const ssize_t w = ::write(in_w.get(), input.data() + written, input.size() - written);
        if (w > 0) written += static_cast<std::size_t>(w);
        if ((w < 0 && errno != EAGAIN && errno != EINTR) || written == input.size()) in_w.reset();
      } else {
        const bool is_out = fds[i].fd == out_r.get();
        const ssize_t r = ::read(fds[i].fd, buf, sizeof(buf));
        if (r > 0) (is_out ? result.out : result.err).append(buf, static_cast<std::size_t>(r));
        else if (r == 0 || (errno != EAGAIN && errno != EINTR)) (is_out ? out_r : err_r).reset();
      }
    }
  }
  in_w.reset();
  if (result.timed_out) ::kill(pid, SIGKILL);
  int status = 0;
  while (::waitpid(pid, &status, 0) < 0 && errno == EINTR) {
  }
  if (!result.timed_out) result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status);
  return result;
}

/// Parses the bridge reply: exactly `expected` LF-terminated decimals in [0, 1].
inline std::vector<double> parse_probability_lines(const std::string& text, std::size_t expected) {
  std::vector<double> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string::npos) nl = text.size();
    std::string line = text.substr(pos, nl - pos);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    pos = nl + 1;
    const auto v = try_parse_double(line);
    if (!v) throw Error("external model: line " + std::to_string(out.size() + 1) + " is not a number: '" + line + "'");
    if (!(*v >= 0.0 && *v <= 1.0))
      throw Error("external model: line " + std::to_string(out.size() + 1) + " value " + line + " outside [0, 1]");
    out.push_back(*v);
  }
  if (out.size() != expected)
    throw Error("external model: line count mismatch (expected " + std::to_string(expected) + ", got " +
                std::to_string(out.size()) + ")");
  return out;
}

inline std::vector<double> external_predict(const std::string& command, const EncodedMatrix& m,
                                            double timeout_seconds) {
  std::ostringstream payload;
  write_matrix_csv(payload, m, false);
  const ProcessResult res = run_process(command, payload.str(), timeout_seconds);
  if (res.timed_out)
    throw Error("external model: timed out after " + format_double(timeout_seconds) + " s: " + command);
  if (res.exit_code != 0)
    throw Error("external model: exit code " + std::to_string(res.exit_code) + ": " + trim(res.err));
  return parse_probability_lines(res.out, m.rows());
}

/// Predictor facade over an external command.
class ExternalPredictor : public Predictor {
 public:
  ExternalPredictor(std::string command, std::vector<std::string> signature = {}, double timeout_seconds = 300.0)
      : command_(std::move(command)), signature_(std::move(signature)), timeout_(timeout_seconds) {}

  std::vector<double> predict_proba(const EncodedMatrix& m) const override {
    check_signature(*this, m);
    return external_predict(command_, m, timeout_);
  }
  std::vector<std::string> signature() const override { return signature_; }

 private:
  std::string command_;
  std::vector<std::string> signature_;
  double timeout_;
};

}  // namespace popx
