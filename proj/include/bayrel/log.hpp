#pragma once

#include <string>

namespace bayrel {

enum class LogLevel { error = 0, info = 1, debug = 2 };

// Level comes from BAYREL_LOG (error|info|debug), read once; default info.
LogLevel log_level();

void log_error(const std::string& msg);
void log_info(const std::string& msg);
void log_debug(const std::string& msg);

}  // namespace bayrel
