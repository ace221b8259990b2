#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "impsy/dataset.hpp"
#include "impsy/frame.hpp"

namespace impsy {

using WallTime = std::chrono::sys_time<std::chrono::milliseconds>;

/// One line of a session log: wall-clock time (ms), who produced it, and the
/// full composite state of every dimension.
struct LogRecord {
  WallTime at{};
  Source source = Source::human;
  std::vector<double> dims;

  bool operator==(const LogRecord&) const = default;
};

/// "2026-10-16T14:16:00.123Z"
std::string format_timestamp(WallTime at);
std::optional<WallTime> parse_timestamp(std::string_view text);

/// "ISO8601,source,v0,...,v{D-1}" without the newline. Values use the shortest
/// representation that parses back to the same double.
std::string format_log_line(const LogRecord& record);

/// Returns nullopt for malformed lines or lines with the wrong dimension count.
std::optional<LogRecord> parse_log_line(std::string_view line, int dims);

std::string log_header(int dims);

/// "YYYYMMDDTHHMMSS.csv" in UTC.
std::string session_file_name(WallTime start);

/// Session files in a log directory, oldest first.
std::vector<std::filesystem::path> list_sessions(const std::filesystem::path& log_dir);

/// Append-only writer for one session file.
class SessionLog {
 public:
  SessionLog() = default;

  /// Starts a new session file named after start; an existing name gets a
  /// numeric suffix so earlier sessions are never touched.
  std::filesystem::path rotate(const std::filesystem::path& log_dir, int dims, WallTime start);

  /// False once a write has failed (e.g. disk full); later writes are ignored.
  bool write(const LogRecord& record);
  void flush();
  void close();

  bool enabled() const { return enabled_; }
  const std::filesystem::path& path() const { return path_; }
  std::uint64_t records_written() const { return written_; }

 private:
  std::ofstream out_;
  std::filesystem::path path_;
  bool enabled_ = false;
  std::uint64_t written_ = 0;
};

/// SessionLog behind a bounded queue and a writer thread so the engine loop never
/// waits on the disk. Overflow drops the newest record and counts it.
class AsyncLogWriter {
 public:
  explicit AsyncLogWriter(std::size_t capacity = 4096);
  ~AsyncLogWriter();

  AsyncLogWriter(const AsyncLogWriter&) = delete;
  AsyncLogWriter& operator=(const AsyncLogWriter&) = delete;

  std::filesystem::path rotate(const std::filesystem::path& log_dir, int dims, WallTime start);

  /// Never blocks on I/O.
  void post(LogRecord record);

  /// Blocks until every posted record has been written and flushed.
  void drain();

  bool enabled() const { return enabled_.load(); }
  std::uint64_t dropped() const { return dropped_.load(); }
  std::uint64_t written() const { return written_.load(); }
  std::filesystem::path path() const;

 private:
  void run();

  std::size_t capacity_;
  mutable std::mutex mutex_;
  std::condition_variable wake_;
  std::condition_variable idle_;
  std::deque<LogRecord> queue_;
  SessionLog log_;
  bool busy_ = false;
  bool stop_ = false;
  std::atomic<bool> enabled_{false};
  std::atomic<std::uint64_t> dropped_{0};
  std::atomic<std::uint64_t> written_{0};
  std::thread worker_;
};

struct BuildReport {
  std::vector<std::string> warnings;
  std::size_t lines_parsed = 0;
  std::size_t lines_skipped = 0;
};

/// One sequence per log file (no dt across files). dt is the timestamp
/// difference to the previous record, capped at dt_max; the first frame has dt 0.
/// Malformed lines are skipped with a warning. Throws DatasetError when a file
/// header declares a different dimension.
Dataset build_dataset(const std::vector<std::filesystem::path>& files, int dims,
                      double dt_max = kDefaultDtMax, BuildReport* report = nullptr);

}  // namespace impsy
