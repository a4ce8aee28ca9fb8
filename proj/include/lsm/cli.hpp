// Command-line front end.
//
//   logshape synth            --spec <toml> --out-dir <dir>
//   logshape fit              --image <vol> --shape {cochlea|circle} --config <toml> --out-dir <dir>
//   logshape sweep-lref       --image <vol> --grid lo:step:hi --out <csv>
//   logshape sample-posterior --fit <dir> --n 100 --seed 42 --out <vol>
//   logshape metrics          --a <mask> --b <mask>
//   logshape shape sdf        --params <toml> --grid nx,ny,nz,spacing --out <vol>
//   logshape config           --defaults
//
// Global flags: --version, --json, --threads N, --seed S.
// Exit codes: 0 success, 1 usage error, 2 runtime error.
#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace lsm {

inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

const char* version_string();

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace lsm
