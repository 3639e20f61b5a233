#include "cbx/score_log.hpp"

#include "cbx/error.hpp"

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <fcntl.h>
#include <fstream>
#include <sstream>
#include <unistd.h>

namespace cbx {

using nlohmann::json;

namespace {

void write_all(int fd, const std::string& data) {
  std::size_t off = 0;
  while (off < data.size()) {
    const ssize_t n = ::write(fd, data.data() + off, data.size() - off);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw IoError(std::string("score log write failed: ") + std::strerror(errno));
    }
    off += static_cast<std::size_t>(n);
  }
}

std::int64_t now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
      .count();
}

}  // namespace

std::vector<ExpertScore> ScoreLog::read(const std::filesystem::path& path, std::vector<std::string>* warnings) {
  std::vector<ExpertScore> out;
  std::ifstream in(path, std::ios::binary);
  if (!in) return out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(ExpertScore::from_json(json::parse(line)));
    } catch (const std::exception& e) {
      if (warnings) warnings->push_back("score log line " + std::to_string(lineno) + " skipped: " + e.what());
    }
  }
  return out;
}

ScoreLog::ScoreLog(std::filesystem::path path) : path_(std::move(path)) {
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  records_ = read(path_, &replay_warnings_);
  for (const auto& r : records_) {
    if (r.record_id.size() > 1 && r.record_id[0] == 's') {
      try {
        next_seq_ = std::max<std::size_t>(next_seq_, std::stoull(r.record_id.substr(1)));
      } catch (const std::exception&) {
      }
    }
  }
  fd_ = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd_ < 0) throw IoError("cannot open score log " + path_.string() + ": " + std::strerror(errno));
  const auto size = std::filesystem::file_size(path_);
  if (size > 0) {
    std::ifstream in(path_, std::ios::binary);
    in.seekg(static_cast<std::streamoff>(size - 1));
    needs_newline_ = in.get() != '\n';
  }
  writer_ = std::thread([this] { writer_loop(); });
}

ScoreLog::~ScoreLog() {
  {
    std::lock_guard lock(queue_mu_);
    stopping_ = true;
  }
  queue_cv_.notify_all();
  if (writer_.joinable()) writer_.join();
  if (fd_ >= 0) ::close(fd_);
}

ExpertScore ScoreLog::append(ExpertScore score) {
  std::future<void> done;
  {
    std::lock_guard lock(queue_mu_);
    if (stopping_) throw IoError("score log is closed");
    if (score.record_id.empty()) score.record_id = "s" + std::to_string(++next_seq_);
    if (score.timestamp == 0) score.timestamp = now_ms();
    Pending p;
    p.score = score;
    p.line = score.to_json().dump() + "\n";
    done = p.done.get_future();
    queue_.push_back(std::move(p));
  }
  queue_cv_.notify_one();
  done.get();  // rethrows write failures
  return score;
}

void ScoreLog::writer_loop() {
  while (true) {
    std::deque<Pending> batch;
    {
      std::unique_lock lock(queue_mu_);
      queue_cv_.wait(lock, [&] { return stopping_ || !queue_.empty(); });
      if (queue_.empty()) return;
      batch.swap(queue_);
    }
    std::string data;
    if (needs_newline_) data += '\n';
    for (const auto& p : batch) data += p.line;
    try {
      write_all(fd_, data);
      if (::fsync(fd_) != 0) throw IoError(std::string("score log fsync failed: ") + std::strerror(errno));
      needs_newline_ = false;
      {
        std::lock_guard lock(records_mu_);
        for (const auto& p : batch) records_.push_back(p.score);
      }
      for (auto& p : batch) p.done.set_value();
    } catch (...) {
      for (auto& p : batch) p.done.set_exception(std::current_exception());
    }
  }
}

std::vector<ExpertScore> ScoreLog::records() const {
  std::lock_guard lock(records_mu_);
  return records_;
}

std::size_t ScoreLog::size() const {
  std::lock_guard lock(records_mu_);
  return records_.size();
}

}  // namespace cbx
