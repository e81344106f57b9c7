#pragma once

#include <functional>
#include <string_view>

namespace fusionkit {

using LogSink = std::function<void(std::string_view)>;

/// Warnings go to stderr unless a sink is installed. Returns the previous sink.
LogSink set_warning_sink(LogSink sink);
void log_warning(std::string_view message);

}  // namespace fusionkit
