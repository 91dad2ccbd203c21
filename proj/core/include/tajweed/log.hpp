#pragma once

#include <string_view>

// Plain-string logging entry points. Translation units that include libtorch
// use these instead of spdlog directly: libtorch bundles its own fmt headers,
// which shadow the fmt version spdlog was built against.
namespace tajweed::log {

/// Sends the default logger to stderr at the given level
/// ("trace", "debug", "info", "warn", "error", "off"). Throws UsageError on an
/// unknown level.
void init(std::string_view level = "info");

void debug(std::string_view message);
void info(std::string_view message);
void warn(std::string_view message);
void error(std::string_view message);

}  // namespace tajweed::log
