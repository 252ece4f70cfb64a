#pragma once

#include <functional>
#include <iostream>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

namespace advbayes::diag {

using Sink = std::function<void(const std::string&)>;

namespace detail {
inline std::mutex& sink_mutex() {
  static std::mutex m;
  return m;
}
inline Sink& sink() {
  static Sink s = [](const std::string& msg) { std::clog << "[advbayes] warning: " << msg << '\n'; };
  return s;
}
}  // namespace detail

/// Replaces the warning sink and returns the previous one.
inline Sink set_sink(Sink s) {
  std::lock_guard<std::mutex> lock(detail::sink_mutex());
  return std::exchange(detail::sink(), std::move(s));
}

inline void warn(const std::string& msg) {
  std::lock_guard<std::mutex> lock(detail::sink_mutex());
  if (detail::sink()) detail::sink()(msg);
}

/// Captures warnings for the lifetime of the object.
class ScopedCapture {
 public:
  ScopedCapture() {
    previous_ = set_sink([this](const std::string& m) { messages_.push_back(m); });
  }
  ~ScopedCapture() { set_sink(std::move(previous_)); }
  ScopedCapture(const ScopedCapture&) = delete;
  ScopedCapture& operator=(const ScopedCapture&) = delete;

  const std::vector<std::string>& messages() const { return messages_; }

 private:
  Sink previous_;
  std::vector<std::string> messages_;
};

}  // namespace advbayes::diag
