#pragma once

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <string>
#include <vector>

#include <boost/crc.hpp>
#include <nlohmann/json.hpp>

#include "lmgame/core/error.hpp"

namespace lmgame {

struct Event {
  std::uint64_t seq = 0;
  std::string type;
  nlohmann::json data;
};

struct ReplayResult {
  std::vector<Event> events;
  std::uint64_t valid_bytes = 0;  // length of the intact prefix
  bool truncated_tail = false;    // something after the intact prefix was dropped
};

// Append-only JSON-lines log. Each line is {"crc", "data", "seq", "type"} where crc is the
// CRC-32 of the line's other three fields serialized compactly. A line counts only if it
// ends in a newline, parses, has the expected sequence number and a matching checksum;
// replay stops at the first line that does not.
class EventLog {
 public:
  explicit EventLog(std::filesystem::path path) : path_(std::move(path)) {
    if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
    const auto replayed = replay(path_);
    next_seq_ = replayed.events.empty() ? 1 : replayed.events.back().seq + 1;
    fd_ = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_CLOEXEC, 0644);
    if (fd_ < 0) fail(ErrorKind::runtime, "cannot open event log " + path_.string() + ": " + std::strerror(errno));
    // Drop a torn final write so new events follow the intact prefix directly.
    if (::ftruncate(fd_, static_cast<off_t>(replayed.valid_bytes)) != 0 ||
        ::lseek(fd_, static_cast<off_t>(replayed.valid_bytes), SEEK_SET) < 0) {
      ::close(fd_);
      fail(ErrorKind::runtime, "cannot reposition event log " + path_.string() + ": " + std::strerror(errno));
    }
    offset_ = replayed.valid_bytes;
  }
  EventLog(const EventLog&) = delete;
  EventLog& operator=(const EventLog&) = delete;
  ~EventLog() { close(); }

  static std::uint32_t checksum(std::uint64_t seq, const std::string& type, const nlohmann::json& data) {
    const auto body = nlohmann::json{{"seq", seq}, {"type", type}, {"data", data}}.dump();
    boost::crc_32_type crc;
    crc.process_bytes(body.data(), body.size());
    return crc.checksum();
  }

  static std::string encode(const Event& e) {
    nlohmann::json line{{"seq", e.seq}, {"type", e.type}, {"data", e.data}, {"crc", checksum(e.seq, e.type, e.data)}};
    return line.dump() + "\n";
  }

  static ReplayResult replay(const std::filesystem::path& path) {
    ReplayResult out;
    std::ifstream in(path, std::ios::binary);
    if (!in) return out;
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::size_t pos = 0;
    std::uint64_t expect = 1;
    while (pos < content.size()) {
      const auto nl = content.find('\n', pos);
      if (nl == std::string::npos) break;
      auto line = nlohmann::json::parse(content.begin() + static_cast<std::ptrdiff_t>(pos),
                                        content.begin() + static_cast<std::ptrdiff_t>(nl), nullptr, false);
      if (line.is_discarded() || !line.is_object() || !line.contains("seq") || !line.contains("type") ||
          !line.contains("data") || !line.contains("crc"))
        break;
      if (!line["seq"].is_number_unsigned() || !line["type"].is_string() || !line["crc"].is_number_unsigned()) break;
      Event e{line["seq"].get<std::uint64_t>(), line["type"].get<std::string>(), line["data"]};
      if (e.seq != expect || line["crc"].get<std::uint32_t>() != checksum(e.seq, e.type, e.data)) break;
      out.events.push_back(std::move(e));
      ++expect;
      pos = nl + 1;
    }
    out.valid_bytes = pos;
    out.truncated_tail = pos < content.size();
    return out;
  }

  // Writes and fsyncs one event. Returns only once the event is durable.
  Event append(const std::string& type, nlohmann::json data) {
    std::lock_guard lock(mu_);
    if (fd_ < 0) fail(ErrorKind::runtime, "event log is closed");
    Event e{next_seq_, type, std::move(data)};
    const auto line = encode(e);
    std::size_t written = 0;
    while (written < line.size()) {
      const auto n = ::write(fd_, line.data() + written, line.size() - written);
      if (n < 0) {
        if (errno == EINTR) continue;
        rollback();
        fail(ErrorKind::runtime, std::string("event log write failed: ") + std::strerror(errno));
      }
      written += static_cast<std::size_t>(n);
    }
    if (::fsync(fd_) != 0) {
      rollback();
      fail(ErrorKind::runtime, std::string("event log fsync failed: ") + std::strerror(errno));
    }
    offset_ += line.size();
    ++next_seq_;
    return e;
  }

  void close() {
    std::lock_guard lock(mu_);
    if (fd_ >= 0) {
      ::fsync(fd_);
      ::close(fd_);
      fd_ = -1;
    }
  }

  std::uint64_t next_seq() const {
    std::lock_guard lock(mu_);
    return next_seq_;
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  // Best effort: cut a half-written line so the log stays a clean prefix.
  void rollback() {
    if (::ftruncate(fd_, static_cast<off_t>(offset_)) == 0) ::lseek(fd_, static_cast<off_t>(offset_), SEEK_SET);
  }

  std::filesystem::path path_;
  int fd_ = -1;
  std::uint64_t offset_ = 0;
  std::uint64_t next_seq_ = 1;
  mutable std::mutex mu_;
};

}  // namespace lmgame
