#pragma once

#include <string>

namespace tau {

// One instruction record. `system` and `input` may be empty.
struct ChatExample {
    std::string system;
    std::string instruction;
    std::string input;
    std::string output;

    bool operator==(const ChatExample&) const = default;
};

// Enforces the record invariants: non-empty instruction, no reserved
// role-marker strings in any field. Throws on violation; `where` names
// the record in the message.
void validate_chat_example(const ChatExample& e, const std::string& where);

}  // namespace tau
