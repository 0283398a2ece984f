#pragma once

#include <stdexcept>
#include <string>

namespace manynode {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define MANYNODE_DEFINE_ERROR(Name) \
    class Name : public Error {     \
    public:                         \
        using Error::Error;         \
    }

MANYNODE_DEFINE_ERROR(ParseError);
MANYNODE_DEFINE_ERROR(ValidationError);
MANYNODE_DEFINE_ERROR(StructuralError);
MANYNODE_DEFINE_ERROR(ConfigError);
MANYNODE_DEFINE_ERROR(ProfileError);
MANYNODE_DEFINE_ERROR(CausalityError);
MANYNODE_DEFINE_ERROR(RunawayError);
MANYNODE_DEFINE_ERROR(CapacityError);
MANYNODE_DEFINE_ERROR(LookupError);
MANYNODE_DEFINE_ERROR(UsageError);
MANYNODE_DEFINE_ERROR(ProtocolError);
MANYNODE_DEFINE_ERROR(DeadlockError);
MANYNODE_DEFINE_ERROR(IoError);

#undef MANYNODE_DEFINE_ERROR

}  // namespace manynode
