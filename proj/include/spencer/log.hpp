#pragma once

#include <string>

namespace spencer {

// Stderr logging gated by SPENCER_LOG (error, info, debug; default info).
enum class LogLevel { kError = 0, kInfo = 1, kDebug = 2 };

LogLevel log_level();

void log_error(const std::string& msg);
void log_info(const std::string& msg);
void log_debug(const std::string& msg);

}  // namespace spencer
