/*
 * Copyright 2026 The vdep Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <iosfwd>

namespace vdep {

// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitCheckFailed = 1;  // gradcheck tolerance exceeded
inline constexpr int kExitConfig = 2;       // bad flags, config or input validation
inline constexpr int kExitNumeric = 3;      // non-finite loss or gradient
inline constexpr int kExitIo = 4;           // unreadable or unwritable files

/// Entry point of the `vdep` tool: gen-data, train, sweep, eval, attn-map,
/// gradcheck, inspect-ckpt.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace vdep
