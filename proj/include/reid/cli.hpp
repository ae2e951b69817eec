#ifndef REID_CLI_HPP_
#define REID_CLI_HPP_

#include <iosfwd>
#include <string>
#include <vector>

namespace reid {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

// Entry point behind the `reid` binary. args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Version string baked in at configure time.
const char* version_string();

}  // namespace reid

#endif  // REID_CLI_HPP_
