#pragma once

#include <functional>
#include <string>

namespace cpdalign {

// Receives one progress line at a time (epoch, refinement iteration, ...).
using LogSink = std::function<void(const std::string&)>;

}  // namespace cpdalign
