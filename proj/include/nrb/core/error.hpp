// Copyright (c) the nrbench authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <sstream>
#include <stdexcept>
#include <string>

namespace nrb {

// Single exception type used across the library. The message always names the
// failing operation; shape errors include both shapes.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

namespace detail {
inline void msg_cat(std::ostringstream&) {}
template <typename T, typename... Rest>
void msg_cat(std::ostringstream& os, const T& v, const Rest&... rest) {
  os << v;
  msg_cat(os, rest...);
}
}  // namespace detail

template <typename... Parts>
std::string strcat_msg(const Parts&... parts) {
  std::ostringstream os;
  detail::msg_cat(os, parts...);
  return os.str();
}

template <typename... Parts>
[[noreturn]] void fail(const Parts&... parts) {
  throw Error(strcat_msg(parts...));
}

template <typename... Parts>
void check(bool cond, const Parts&... parts) {
  if (!cond) fail(parts...);
}

}  // namespace nrb
