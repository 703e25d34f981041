#pragma once

#include <memory>
#include <ostream>
#include <string_view>

#include <spdlog/logger.h>

namespace monoplot::app {

/// Level from a name (trace, debug, info, warn, error, critical, off).
/// Unknown or empty names give info.
spdlog::level::level_enum parse_log_level(std::string_view name);

/// Logger writing "[level] message" lines to `sink`, at the level named by
/// the MONOPLOT_LOG environment variable.
std::shared_ptr<spdlog::logger> make_logger(std::ostream& sink);

}  // namespace monoplot::app
