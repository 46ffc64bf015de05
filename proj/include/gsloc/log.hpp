// Copyright Contributors to the gsloc Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <string_view>

namespace gsloc {

using WarningHandler = std::function<void(std::string_view)>;

/// Installs a process-wide warning sink and returns the previous one.
/// The default sink writes to std::clog.
WarningHandler set_warning_handler(WarningHandler handler);

void warn(std::string_view message);

} // namespace gsloc
