#include "impsy/session_log.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <regex>

namespace impsy {

namespace {

using namespace std::chrono;

bool parse_int(std::string_view text, int& out) {
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, out);
  return ec == std::errc{} && ptr == end;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    parts.push_back(line.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

}  // namespace

std::string format_timestamp(WallTime at) {
  const auto day = floor<days>(at);
  const year_month_day ymd{day};
  const hh_mm_ss hms{at - day};
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02ld:%02ld:%02ld.%03ldZ", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<long>(hms.hours().count()), static_cast<long>(hms.minutes().count()),
                static_cast<long>(hms.seconds().count()), static_cast<long>(hms.subseconds().count()));
  return buf;
}

std::optional<WallTime> parse_timestamp(std::string_view text) {
  // YYYY-MM-DDTHH:MM:SS.mmmZ
  if (text.size() != 24 || text[4] != '-' || text[7] != '-' || text[10] != 'T' ||
      text[13] != ':' || text[16] != ':' || text[19] != '.' || text[23] != 'Z') {
    return std::nullopt;
  }
  int y, mo, d, h, mi, s, ms;
  if (!parse_int(text.substr(0, 4), y) || !parse_int(text.substr(5, 2), mo) ||
      !parse_int(text.substr(8, 2), d) || !parse_int(text.substr(11, 2), h) ||
      !parse_int(text.substr(14, 2), mi) || !parse_int(text.substr(17, 2), s) ||
      !parse_int(text.substr(20, 3), ms)) {
    return std::nullopt;
  }
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok() || h > 23 || mi > 59 || s > 60) return std::nullopt;
  return WallTime{sys_days{ymd}} + hours{h} + minutes{mi} + seconds{s} + milliseconds{ms};
}

std::string format_log_line(const LogRecord& record) {
  std::string line = format_timestamp(record.at);
  line += ',';
  line += to_string(record.source);
  char buf[32];
  for (double v : record.dims) {
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    line += ',';
    line.append(buf, ptr);
  }
  return line;
}

std::optional<LogRecord> parse_log_line(std::string_view line, int dims) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  const auto parts = split(line, ',');
  if (parts.size() != static_cast<std::size_t>(dims) + 2) return std::nullopt;
  LogRecord record;
  const auto at = parse_timestamp(parts[0]);
  if (!at) return std::nullopt;
  record.at = *at;
  if (parts[1] == "human") {
    record.source = Source::human;
  } else if (parts[1] == "ai") {
    record.source = Source::ai;
  } else {
    return std::nullopt;
  }
  for (std::size_t i = 2; i < parts.size(); ++i) {
    double v = 0.0;
    const auto* end = parts[i].data() + parts[i].size();
    auto [ptr, ec] = std::from_chars(parts[i].data(), end, v);
    if (ec != std::errc{} || ptr != end || !(v >= 0.0 && v <= 1.0)) return std::nullopt;
    record.dims.push_back(v);
  }
  return record;
}

std::string log_header(int dims) { return "#impsy-log v1 dims=" + std::to_string(dims); }

std::string session_file_name(WallTime start) {
  const auto secs = floor<seconds>(start);
  const auto day = floor<days>(secs);
  const year_month_day ymd{day};
  const hh_mm_ss hms{secs - day};
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04d%02u%02uT%02ld%02ld%02ld.csv", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<long>(hms.hours().count()), static_cast<long>(hms.minutes().count()),
                static_cast<long>(hms.seconds().count()));
  return buf;
}

std::vector<std::filesystem::path> list_sessions(const std::filesystem::path& log_dir) {
  static const std::regex pattern(R"(\d{8}T\d{6}(_\d+)?\.csv)");
  std::vector<std::filesystem::path> files;
  std::error_code ec;
  for (const auto& entry : std::filesystem::directory_iterator(log_dir, ec)) {
    if (!entry.is_regular_file()) continue;
    if (std::regex_match(entry.path().filename().string(), pattern)) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

// SessionLog -----------------------------------------------------------------

std::filesystem::path SessionLog::rotate(const std::filesystem::path& log_dir, int dims,
                                         WallTime start) {
  close();
  std::error_code ec;
  std::filesystem::create_directories(log_dir, ec);
  const auto name = session_file_name(start);
  auto candidate = log_dir / name;
  for (int n = 1; std::filesystem::exists(candidate); ++n) {
    candidate = log_dir / (name.substr(0, name.size() - 4) + "_" + std::to_string(n) + ".csv");
  }
  path_ = candidate;
  out_.open(path_, std::ios::out | std::ios::app);
  enabled_ = static_cast<bool>(out_);
  written_ = 0;
  if (enabled_) {
    out_ << log_header(dims) << '\n';
    out_.flush();
    enabled_ = static_cast<bool>(out_);
  }
  return path_;
}

bool SessionLog::write(const LogRecord& record) {
  if (!enabled_) return false;
  out_ << format_log_line(record) << '\n';
  if (!out_) {
    enabled_ = false;
    return false;
  }
  ++written_;
  return true;
}

void SessionLog::flush() {
  if (!enabled_) return;
  out_.flush();
  if (!out_) enabled_ = false;
}

void SessionLog::close() {
  if (out_.is_open()) {
    out_.flush();
    out_.close();
  }
  enabled_ = false;
}

// AsyncLogWriter -------------------------------------------------------------

AsyncLogWriter::AsyncLogWriter(std::size_t capacity)
    : capacity_(capacity), worker_([this] { run(); }) {}

AsyncLogWriter::~AsyncLogWriter() {
  {
    std::lock_guard lock(mutex_);
    stop_ = true;
  }
  wake_.notify_all();
  worker_.join();
  log_.close();
}

std::filesystem::path AsyncLogWriter::rotate(const std::filesystem::path& log_dir, int dims,
                                             WallTime start) {
  std::unique_lock lock(mutex_);
  idle_.wait(lock, [this] { return queue_.empty() && !busy_; });
  auto path = log_.rotate(log_dir, dims, start);
  enabled_ = log_.enabled();
  return path;
}

std::filesystem::path AsyncLogWriter::path() const {
  std::lock_guard lock(mutex_);
  return log_.path();
}

void AsyncLogWriter::post(LogRecord record) {
  {
    std::lock_guard lock(mutex_);
    if (queue_.size() >= capacity_) {
      ++dropped_;
      return;
    }
    queue_.push_back(std::move(record));
  }
  wake_.notify_one();
}

void AsyncLogWriter::drain() {
  std::unique_lock lock(mutex_);
  idle_.wait(lock, [this] { return queue_.empty() && !busy_; });
}

void AsyncLogWriter::run() {
  std::unique_lock lock(mutex_);
  while (true) {
    wake_.wait_for(lock, std::chrono::seconds(1), [this] { return stop_ || !queue_.empty(); });
    if (queue_.empty()) {
      idle_.notify_all();
      if (stop_) return;
      continue;
    }
    std::deque<LogRecord> batch;
    batch.swap(queue_);
    busy_ = true;
    lock.unlock();
    // log_ is only touched by this thread while busy_ is set; rotate() drains first.
    for (const auto& record : batch) {
      if (log_.write(record)) ++written_;
    }
    log_.flush();
    enabled_ = log_.enabled();
    lock.lock();
    busy_ = false;
    if (queue_.empty()) idle_.notify_all();
  }
}

// Dataset building -----------------------------------------------------------

Dataset build_dataset(const std::vector<std::filesystem::path>& files, int dims, double dt_max,
                      BuildReport* report) {
  BuildReport local;
  BuildReport& rep = report ? *report : local;
  Dataset dataset;
  dataset.dimension = dims;
  for (const auto& file : files) {
    std::ifstream in(file, std::ios::binary);
    if (!in) {
      rep.warnings.push_back(file.string() + ": cannot open, skipped");
      continue;
    }
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const bool trailing_newline = !content.empty() && content.back() == '\n';
    auto lines = split(content, '\n');
    if (trailing_newline) lines.pop_back();

    Sequence seq;
    std::optional<WallTime> previous;
    for (std::size_t i = 0; i < lines.size(); ++i) {
      const auto line = lines[i];
      if (line.empty()) continue;
      if (line.front() == '#') {
        const std::string header(line);
        static const std::regex header_re(R"(#impsy-log v1 dims=(\d+)\r?)");
        std::smatch match;
        if (std::regex_match(header, match, header_re) && std::stoi(match[1]) != dims) {
          throw DatasetError(file.string() + ": dimension mismatch (log dims=" +
                             match[1].str() + ", expected " + std::to_string(dims) + ")");
        }
        continue;
      }
      const auto record = parse_log_line(line, dims);
      if (!record) {
        const bool partial_tail = i + 1 == lines.size() && !trailing_newline;
        rep.warnings.push_back(file.string() + ":" + std::to_string(i + 1) +
                               (partial_tail ? ": partial final line skipped"
                                             : ": malformed line skipped"));
        ++rep.lines_skipped;
        continue;
      }
      ++rep.lines_parsed;
      ContinuousFrame frame;
      frame.values = record->dims;
      frame.dt = previous ? duration<double>(record->at - *previous).count() : 0.0;
      previous = record->at;
      seq.frames.push_back(clamp_frame(std::move(frame), dt_max));
      seq.sources.push_back(record->source);
    }
    if (!seq.frames.empty()) dataset.sequences.push_back(std::move(seq));
  }
  return dataset;
}

}  // namespace impsy
