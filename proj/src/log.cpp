// Copyright Contributors to the gsloc Project
// SPDX-License-Identifier: Apache-2.0

#include "gsloc/log.hpp"

#include <iostream>
#include <mutex>
#include <utility>

namespace gsloc {

namespace {

std::mutex& handler_mutex() {
    static std::mutex m;
    return m;
}

WarningHandler& handler() {
    static WarningHandler h = [](std::string_view msg) { std::clog << "gsloc warning: " << msg << '\n'; };
    return h;
}

} // namespace

WarningHandler set_warning_handler(WarningHandler h) {
    std::lock_guard lock(handler_mutex());
    return std::exchange(handler(), std::move(h));
}

void warn(std::string_view message) {
    std::lock_guard lock(handler_mutex());
    if (handler()) {
        handler()(message);
    }
}

} // namespace gsloc
