#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "manynode/timingmodel.hpp"

namespace manynode::timing {

inline constexpr const char* kProfileHeader = "manynode-profile v1";

/// Text serialization of a ProfileSet. Doubles are written in shortest
/// round-trip form, so write(read(write(p))) is byte-identical to write(p).
///
///   manynode-profile v1
///   rank <id>
///   phase <id>
///   cluster <label> count <n> mean <ns> discrete <0|1>
///   edges <n> <e0> ... <en-1>
///   cum <n> <p0> ... <pn-1>
///   pattern <unit-len> <labels...> reps <r> tail <tail-len> <labels...>
///   end
void write_profile(std::ostream& out, const ProfileSet& profile);
ProfileSet read_profile(std::istream& in, const std::string& origin = "<profile>");

void save_profile(const std::filesystem::path& path, const ProfileSet& profile);
ProfileSet load_profile(const std::filesystem::path& path);

std::string format_double(double value);

}  // namespace manynode::timing
