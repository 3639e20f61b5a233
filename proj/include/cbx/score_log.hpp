#pragma once

#include "cbx/eval.hpp"

#include <condition_variable>
#include <deque>
#include <filesystem>
#include <future>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace cbx {

// Append-only JSON Lines log of expert scores. A single writer thread owns
// the file; append() returns only after the line is flushed and fsynced.
// Existing lines are never rewritten: a torn trailing line left by a crash
// is skipped on replay and the next record starts on a fresh line.
class ScoreLog {
 public:
  explicit ScoreLog(std::filesystem::path path);
  ~ScoreLog();
  ScoreLog(const ScoreLog&) = delete;
  ScoreLog& operator=(const ScoreLog&) = delete;

  // Stores the score and returns it with record_id (and timestamp, when
  // zero) filled in. Thread-safe.
  ExpertScore append(ExpertScore score);

  std::vector<ExpertScore> records() const;
  std::size_t size() const;
  const std::vector<std::string>& replay_warnings() const { return replay_warnings_; }
  const std::filesystem::path& path() const { return path_; }

  // Parses a log file without opening it for writing.
  static std::vector<ExpertScore> read(const std::filesystem::path& path, std::vector<std::string>* warnings = nullptr);

 private:
  struct Pending {
    ExpertScore score;
    std::string line;
    std::promise<void> done;
  };

  void writer_loop();

  std::filesystem::path path_;
  int fd_ = -1;
  bool needs_newline_ = false;
  std::vector<std::string> replay_warnings_;

  mutable std::mutex records_mu_;
  std::vector<ExpertScore> records_;

  std::mutex queue_mu_;
  std::condition_variable queue_cv_;
  std::deque<Pending> queue_;
  std::size_t next_seq_ = 0;
  bool stopping_ = false;
  std::thread writer_;
};

}  // namespace cbx
