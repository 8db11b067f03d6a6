#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <array>
#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>
#include <system_error>

#include <nlohmann/json.hpp>

#include "qeval/jsonl.hpp"
#include "qeval/sandbox.hpp"

extern char** environ;

namespace qeval {

namespace {

constexpr std::size_t kTailBytes = 64 * 1024;

class TempDir {
 public:
  explicit TempDir(const std::filesystem::path& parent) {
    auto base = parent.empty() ? std::filesystem::temp_directory_path() : parent;
    std::filesystem::create_directories(base);
    std::string tmpl = (base / "qeval-XXXXXX").string();
    if (::mkdtemp(tmpl.data()) == nullptr) {
      throw std::system_error(errno, std::generic_category(), "mkdtemp " + tmpl);
    }
    path_ = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

class Pipe {
 public:
  Pipe() {
    if (::pipe2(fds_.data(), O_CLOEXEC) != 0) {
      throw std::system_error(errno, std::generic_category(), "pipe2");
    }
  }
  ~Pipe() {
    close_read();
    close_write();
  }
  Pipe(const Pipe&) = delete;
  Pipe& operator=(const Pipe&) = delete;

  int read_end() const { return fds_[0]; }
  int write_end() const { return fds_[1]; }
  void close_read() { close_fd(fds_[0]); }
  void close_write() { close_fd(fds_[1]); }

 private:
  static void close_fd(int& fd) {
    if (fd >= 0) ::close(fd);
    fd = -1;
  }
  std::array<int, 2> fds_{-1, -1};
};

void append_tail(std::string& buf, const char* data, std::size_t n) {
  buf.append(data, n);
  if (buf.size() > 2 * kTailBytes) buf.erase(0, buf.size() - kTailBytes);
}

std::string finish_tail(std::string buf) {
  if (buf.size() > kTailBytes) buf.erase(0, buf.size() - kTailBytes);
  return utf8_clean_head(std::move(buf));
}

/// Reads whatever is available; returns false once the descriptor hit EOF.
bool drain_once(int fd, std::string& buf) {
  char chunk[8192];
  ssize_t n = ::read(fd, chunk, sizeof chunk);
  if (n > 0) {
    append_tail(buf, chunk, static_cast<std::size_t>(n));
    return true;
  }
  if (n < 0 && (errno == EINTR || errno == EAGAIN)) return true;
  return false;
}

std::string last_nonblank_line(const std::string& text) {
  std::size_t end = text.size();
  while (end > 0) {
    std::size_t start = text.rfind('\n', end - 1);
    std::size_t from = start == std::string::npos ? 0 : start + 1;
    std::string line = text.substr(from, end - from);
    if (line.find_first_not_of(" \t\r") != std::string::npos) return line;
    if (start == std::string::npos) break;
    end = start;
  }
  return {};
}

std::string format_seconds(double s) {
  std::ostringstream out;
  if (std::floor(s) == s) {
    out << static_cast<long long>(s);
  } else {
    out << s;
  }
  return out.str();
}

ExecutionResult harness_fault(std::string why) {
  ExecutionResult r;
  r.status = ExecStatus::harness_error;
  r.diagnostic = std::move(why);
  return r;
}

void decode_verdict(ExecutionResult& r, int exit_code, bool signalled) {
  const std::string line = last_nonblank_line(r.stdout_tail);
  nlohmann::json verdict;
  try {
    verdict = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error&) {
    verdict = nullptr;
  }
  auto status_field = verdict.is_object() ? verdict.value("status", "") : std::string();
  if (!verdict.is_object() ||
      (status_field != "pass" && status_field != "fail" && status_field != "error")) {
    r.status = ExecStatus::harness_error;
    r.diagnostic = std::string("runner shim produced no parseable verdict (") +
                   (signalled ? "killed by signal " : "exit code ") + std::to_string(exit_code) +
                   ")";
    if (!r.stderr_tail.empty()) r.diagnostic += "\n" + r.stderr_tail;
    return;
  }
  // The verdict is kept in structured form; stdout_tail keeps only what came before it.
  r.stdout_tail.erase(r.stdout_tail.rfind(line));
  if (!r.stdout_tail.empty() && r.stdout_tail.back() == '\n') r.stdout_tail.pop_back();
  if (auto it = verdict.find("duration_ms"); it != verdict.end() && it->is_number()) {
    r.shim_duration_ms = it->get<long long>();
  }
  const std::string error_class =
      verdict.contains("error_class") && verdict["error_class"].is_string()
          ? verdict["error_class"].get<std::string>()
          : std::string();
  if (exit_code == 2 || error_class == "ShimFault") {
    r.status = ExecStatus::harness_error;
    r.error_class = error_class.empty() ? std::optional<std::string>() : error_class;
    r.diagnostic = "runner shim fault: " + verdict.value("message", std::string());
    return;
  }
  if (status_field == "pass") {
    if (exit_code != 0) {
      r.status = ExecStatus::harness_error;
      r.diagnostic = "pass verdict with nonzero exit code " + std::to_string(exit_code);
      return;
    }
    r.status = ExecStatus::pass;
    return;
  }
  r.status = status_field == "fail" ? ExecStatus::fail : ExecStatus::error;
  if (!error_class.empty()) r.error_class = error_class;
  auto message = verdict.contains("message") && verdict["message"].is_string()
                     ? verdict["message"].get<std::string>()
                     : std::string();
  r.message = message;
  auto tb = verdict.contains("traceback_tail") && verdict["traceback_tail"].is_string()
                ? verdict["traceback_tail"].get<std::string>()
                : std::string();
  if (!tb.empty()) {
    r.diagnostic = tb;
  } else {
    r.diagnostic = error_class.empty() ? message : error_class + ": " + message;
  }
}

}  // namespace

void SandboxConfig::validate() const {
  if (!(timeout_seconds > 0.0)) throw std::invalid_argument("sandbox.timeout must be > 0");
  if (feedback_limit == 0) throw std::invalid_argument("sandbox.feedback_limit must be > 0");
  if (interpreter_command.empty() || interpreter_command.front().empty()) {
    throw std::invalid_argument("sandbox.interpreter_command must not be empty");
  }
}

std::string timeout_message(double timeout_seconds) {
  return "execution timed out after " + format_seconds(timeout_seconds) + " seconds";
}

std::string extract_feedback(const ExecutionResult& result, std::size_t limit) {
  if (result.status == ExecStatus::pass) {
    throw std::logic_error("extract_feedback called on a passing result");
  }
  const std::string& text = result.diagnostic;
  if (text.size() <= limit) return text;
  std::string tail = text.substr(text.size() - limit);
  auto nl = tail.find('\n');
  if (nl != std::string::npos && nl + 1 < tail.size()) return tail.substr(nl + 1);
  return utf8_clean_head(std::move(tail));
}

ExecutionResult execute_with_timeout(const Payload& payload, const SandboxConfig& cfg) {
  cfg.validate();
  using clock = std::chrono::steady_clock;

  std::optional<TempDir> dir;
  try {
    dir.emplace(cfg.workdir);
    std::ofstream out(dir->path() / "payload.json", std::ios::binary);
    out << dump_compact(to_json(payload));
    if (!out) return harness_fault("cannot write payload file");
  } catch (const std::exception& e) {
    return harness_fault(std::string("sandbox setup failed: ") + e.what());
  }
  const std::string payload_path = (dir->path() / "payload.json").string();

  std::vector<std::string> args = cfg.interpreter_command;
  args.push_back(payload_path);
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  argv.push_back(nullptr);

  std::vector<std::string> env_entries;
  for (const auto& name : cfg.env_allowlist) {
    if (const char* v = std::getenv(name.c_str())) env_entries.push_back(name + "=" + v);
  }
  std::vector<char*> envp;
  for (auto& e : env_entries) envp.push_back(e.data());
  envp.push_back(nullptr);

  Pipe out_pipe;
  Pipe err_pipe;
  posix_spawn_file_actions_t actions;
  posix_spawnattr_t attr;
  posix_spawn_file_actions_init(&actions);
  posix_spawnattr_init(&attr);
  posix_spawn_file_actions_addopen(&actions, STDIN_FILENO, "/dev/null", O_RDONLY, 0);
  posix_spawn_file_actions_adddup2(&actions, out_pipe.write_end(), STDOUT_FILENO);
  posix_spawn_file_actions_adddup2(&actions, err_pipe.write_end(), STDERR_FILENO);
  posix_spawn_file_actions_addchdir_np(&actions, dir->path().c_str());
  posix_spawnattr_setpgroup(&attr, 0);
  posix_spawnattr_setflags(&attr, POSIX_SPAWN_SETPGROUP);

  const auto start = clock::now();
  pid_t pid = -1;
  int rc = ::posix_spawnp(&pid, argv[0], &actions, &attr, argv.data(), envp.data());
  posix_spawn_file_actions_destroy(&actions);
  posix_spawnattr_destroy(&attr);
  out_pipe.close_write();
  err_pipe.close_write();
  if (rc != 0) {
    auto r = harness_fault("cannot start interpreter '" + args.front() + "': " + std::strerror(rc));
    r.wall_time = std::chrono::duration<double>(clock::now() - start).count();
    return r;
  }

  const auto deadline =
      start + std::chrono::duration_cast<clock::duration>(
                  std::chrono::duration<double>(cfg.timeout_seconds));
  std::string out_buf;
  std::string err_buf;
  bool out_open = true;
  bool err_open = true;
  bool exited = false;
  bool timed_out = false;
  int wstatus = 0;

  while (true) {
    auto now = clock::now();
    if (now >= deadline) {
      ::kill(-pid, SIGKILL);
      ::waitpid(pid, &wstatus, 0);
      timed_out = true;
      break;
    }
    auto remaining_ms =
        std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now).count() + 1;
    std::array<pollfd, 2> fds{};
    nfds_t nfds = 0;
    if (out_open) fds[nfds++] = {out_pipe.read_end(), POLLIN, 0};
    if (err_open) fds[nfds++] = {err_pipe.read_end(), POLLIN, 0};
    int wait_ms = static_cast<int>(std::min<long long>(remaining_ms, nfds ? 50 : 5));
    int ready = ::poll(fds.data(), nfds, wait_ms);
    if (ready > 0) {
      for (nfds_t i = 0; i < nfds; ++i) {
        if (fds[i].revents == 0) continue;
        bool is_out = fds[i].fd == out_pipe.read_end();
        bool open = drain_once(fds[i].fd, is_out ? out_buf : err_buf);
        (is_out ? out_open : err_open) = open;
      }
    }
    if (::waitpid(pid, &wstatus, WNOHANG) == pid) {
      exited = true;
      break;
    }
  }
  const auto end = clock::now();
  // Reap anything the interpreter left behind in its process group.
  ::kill(-pid, SIGKILL);

  // Writers are gone; collect what is still buffered.
  const auto drain_deadline = clock::now() + std::chrono::milliseconds(500);
  while ((out_open || err_open) && clock::now() < drain_deadline) {
    std::array<pollfd, 2> fds{};
    nfds_t nfds = 0;
    if (out_open) fds[nfds++] = {out_pipe.read_end(), POLLIN, 0};
    if (err_open) fds[nfds++] = {err_pipe.read_end(), POLLIN, 0};
    if (::poll(fds.data(), nfds, 50) <= 0) continue;
    for (nfds_t i = 0; i < nfds; ++i) {
      if (fds[i].revents == 0) continue;
      bool is_out = fds[i].fd == out_pipe.read_end();
      bool open = drain_once(fds[i].fd, is_out ? out_buf : err_buf);
      (is_out ? out_open : err_open) = open;
    }
  }

  ExecutionResult r;
  r.wall_time = std::chrono::duration<double>(end - start).count();
  r.stdout_tail = finish_tail(std::move(out_buf));
  r.stderr_tail = finish_tail(std::move(err_buf));

  if (timed_out) {
    r.status = ExecStatus::timeout;
    r.diagnostic = timeout_message(cfg.timeout_seconds);
  } else {
    (void)exited;
    bool signalled = WIFSIGNALED(wstatus);
    int code = signalled ? WTERMSIG(wstatus) : WEXITSTATUS(wstatus);
    decode_verdict(r, code, signalled);
  }
  if (r.status != ExecStatus::pass) r.feedback = extract_feedback(r, cfg.feedback_limit);
  return r;
}

SandboxPool::SandboxPool(std::size_t max_concurrent) : capacity_(std::max<std::size_t>(1, max_concurrent)) {}

ExecutionResult SandboxPool::execute(const Payload& payload, const SandboxConfig& cfg) {
  {
    std::unique_lock lock(mutex_);
    released_.wait(lock, [&] { return in_use_ < capacity_; });
    ++in_use_;
  }
  struct Release {
    SandboxPool* pool;
    ~Release() {
      {
        std::lock_guard lock(pool->mutex_);
        --pool->in_use_;
      }
      pool->released_.notify_one();
    }
  } release{this};
  return execute_with_timeout(payload, cfg);
}

}  // namespace qeval
