#include "ihcc/common.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

namespace ihcc {

namespace {
std::atomic<bool> warnings_enabled{true};
std::mutex warn_mutex;
} // namespace

void log_warning(std::string_view message) {
    if (!warnings_enabled.load()) return;
    std::lock_guard lock(warn_mutex);
    std::cerr << "ihcc: warning: " << message << '\n';
}

void set_warnings_enabled(bool enabled) { warnings_enabled.store(enabled); }

} // namespace ihcc
