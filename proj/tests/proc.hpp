#pragma once

// Spawns the igs binary as a child process and reads the port it prints.

#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <string>
#include <thread>
#include <vector>

namespace proc {

struct Child {
  pid_t pid = -1;
  int port = -1;
  std::FILE* out = nullptr;
};

/// Runs `igs <args...>` with stdout piped. When `wait_port` is set, blocks
/// until the "listening on host:port" line appears (port -1 if the child
/// exits first).
inline Child spawn(const std::vector<std::string>& args, bool wait_port = true) {
  int fds[2];
  if (pipe(fds) != 0) return {};
  const pid_t pid = fork();
  if (pid == 0) {
    dup2(fds[1], STDOUT_FILENO);
    close(fds[0]);
    close(fds[1]);
    std::vector<char*> argv;
    std::string bin = IGS_BINARY;
    argv.push_back(bin.data());
    std::vector<std::string> copy = args;
    for (auto& a : copy) argv.push_back(a.data());
    argv.push_back(nullptr);
    execv(bin.c_str(), argv.data());
    _exit(127);
  }
  close(fds[1]);
  Child c{pid, -1, fdopen(fds[0], "r")};
  if (!wait_port) return c;
  char line[256];
  while (std::fgets(line, sizeof line, c.out)) {
    const std::string s(line);
    const auto colon = s.rfind(':');
    if (s.rfind("listening on ", 0) == 0 && colon != std::string::npos) {
      c.port = std::stoi(s.substr(colon + 1));
      break;
    }
  }
  return c;
}

/// Waits for exit; returns the exit status, or 128 + signal.
inline int wait(Child& c) {
  int status = 0;
  waitpid(c.pid, &status, 0);
  if (c.out) std::fclose(c.out);
  c.out = nullptr;
  if (WIFEXITED(status)) return WEXITSTATUS(status);
  if (WIFSIGNALED(status)) return 128 + WTERMSIG(status);
  return -1;
}

/// Like wait(), but kills the child with SIGKILL after `limit`.
inline int wait_for(Child& c, std::chrono::milliseconds limit) {
  const auto deadline = std::chrono::steady_clock::now() + limit;
  int status = 0;
  while (waitpid(c.pid, &status, WNOHANG) == 0) {
    if (std::chrono::steady_clock::now() > deadline) {
      kill(c.pid, SIGKILL);
      return wait(c);
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
  if (c.out) std::fclose(c.out);
  c.out = nullptr;
  if (WIFEXITED(status)) return WEXITSTATUS(status);
  if (WIFSIGNALED(status)) return 128 + WTERMSIG(status);
  return -1;
}

inline int stop(Child& c, int sig) {
  kill(c.pid, sig);
  return wait(c);
}

inline std::string temp_dir(const std::string& tag) {
  char buf[] = "/tmp/igs-XXXXXX";
  const char* d = mkdtemp(buf);
  return d ? std::string(d) + "/" + tag : "/tmp/igs-" + tag;
}

}  // namespace proc
