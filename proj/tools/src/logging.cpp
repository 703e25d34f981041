#include "monoplot/app/logging.hpp"

#include <cstdlib>
#include <string>

#include <spdlog/sinks/ostream_sink.h>

namespace monoplot::app {

spdlog::level::level_enum parse_log_level(std::string_view name) {
  if (name.empty()) return spdlog::level::info;
  const auto level = spdlog::level::from_str(std::string(name));
  // from_str maps unknown names to off.
  if (level == spdlog::level::off && name != "off") return spdlog::level::info;
  return level;
}

std::shared_ptr<spdlog::logger> make_logger(std::ostream& sink) {
  auto ostream_sink = std::make_shared<spdlog::sinks::ostream_sink_mt>(sink, true);
  auto logger = std::make_shared<spdlog::logger>("monoplot", std::move(ostream_sink));
  logger->set_pattern("[%l] %v");
  const char* env = std::getenv("MONOPLOT_LOG");
  logger->set_level(parse_log_level(env ? env : ""));
  return logger;
}

}  // namespace monoplot::app
