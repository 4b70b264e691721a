#include "fundus/core/process.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "fundus/core/error.hpp"

namespace fundus {

std::vector<std::string> split_command(const std::string& command) {
  std::vector<std::string> out;
  std::string current;
  bool in_token = false;
  char quote = 0;
  for (char c : command) {
    if (quote) {
      if (c == quote) quote = 0;
      else current.push_back(c);
      continue;
    }
    if (c == '\'' || c == '"') {
      quote = c;
      in_token = true;
    } else if (c == ' ' || c == '\t' || c == '\n') {
      if (in_token) {
        out.push_back(current);
        current.clear();
        in_token = false;
      }
    } else {
      current.push_back(c);
      in_token = true;
    }
  }
  if (quote) fail(Errc::InvalidArgument, "unterminated quote in command: " + command);
  if (in_token) out.push_back(current);
  return out;
}

ProcessResult run_process(const std::vector<std::string>& argv, std::chrono::milliseconds timeout) {
  if (argv.empty()) fail(Errc::InvalidArgument, "empty command");
  int pipefd[2];
  if (pipe(pipefd) != 0) fail(Errc::AdapterFailure, std::string("pipe: ") + std::strerror(errno));

  const pid_t pid = fork();
  if (pid < 0) {
    close(pipefd[0]);
    close(pipefd[1]);
    fail(Errc::AdapterFailure, std::string("fork: ") + std::strerror(errno));
  }
  if (pid == 0) {
    dup2(pipefd[1], STDOUT_FILENO);
    dup2(pipefd[1], STDERR_FILENO);
    close(pipefd[0]);
    close(pipefd[1]);
    std::vector<char*> args;
    args.reserve(argv.size() + 1);
    for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
    args.push_back(nullptr);
    execvp(args[0], args.data());
    const char msg[] = "exec failed\n";
    [[maybe_unused]] auto ignored = write(STDERR_FILENO, msg, sizeof(msg) - 1);
    _exit(127);
  }
  close(pipefd[1]);

  ProcessResult result;
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  bool open = true;
  char buf[4096];
  while (open) {
    const auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(
        deadline - std::chrono::steady_clock::now());
    if (remaining.count() <= 0) {
      result.timed_out = true;
      break;
    }
    pollfd pfd{pipefd[0], POLLIN, 0};
    const int rc = poll(&pfd, 1, static_cast<int>(std::min<long long>(remaining.count(), 100)));
    if (rc < 0 && errno != EINTR) break;
    if (rc > 0) {
      const ssize_t n = read(pipefd[0], buf, sizeof(buf));
      if (n > 0) result.output.append(buf, static_cast<std::size_t>(n));
      else open = false;
    }
  }
  close(pipefd[0]);

  int status = 0;
  if (result.timed_out) {
    kill(pid, SIGKILL);
    waitpid(pid, &status, 0);
    return result;
  }
  // The pipe closed; the child may still be exiting.
  for (;;) {
    const pid_t r = waitpid(pid, &status, WNOHANG);
    if (r == pid) break;
    if (std::chrono::steady_clock::now() >= deadline) {
      kill(pid, SIGKILL);
      waitpid(pid, &status, 0);
      result.timed_out = true;
      return result;
    }
    usleep(2000);
  }
  if (WIFEXITED(status)) result.exit_code = WEXITSTATUS(status);
  else if (WIFSIGNALED(status)) result.exit_code = 128 + WTERMSIG(status);
  return result;
}

}  // namespace fundus
