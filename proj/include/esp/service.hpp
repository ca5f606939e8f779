#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "esp/kb_io.hpp"

namespace esp {

/// HTTP/JSON front end over a directory of sessions (one subdirectory each).
///
///   GET  /api/sessions                      POST /api/sessions
///   GET  /api/sessions/{id}/framing         PUT  /api/sessions/{id}/framing
///   POST /api/sessions/{id}/assess          GET  /api/sessions/{id}/attacks
///   POST /api/sessions/{id}/mitigate        GET  /api/sessions/{id}/solutions
///   POST /api/sessions/{id}/whatif          POST /api/sessions/{id}/hide
///   GET  /api/sessions/{id}/plan/{sol}
///
/// Errors are `{code, stage, message, refs[]}`. Reads of one session run
/// concurrently; mutations of one session are serialized.
class Service {
 public:
  explicit Service(std::filesystem::path root, std::optional<std::filesystem::path> static_dir = std::nullopt);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Binds to `port` (0 picks a free one) and returns the bound port, or -1.
  int bind(const std::string& host, int port);
  /// Serves until stop(); call after bind().
  bool run();
  void stop();
  void wait_until_ready() const;

  /// Listing used by GET /api/sessions.
  json list_sessions() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace esp
