#include "tau/chat.hpp"

#include "tau/errors.hpp"
#include "tau/text.hpp"
#include "tau/tokenizer.hpp"

namespace tau {

void validate_chat_example(const ChatExample& e, const std::string& where) {
    if (e.instruction.empty()) {
        throw_validate(where + ": instruction must be non-empty");
    }
    static const char* kMarkers[] = {kSystemMarker, kUserMarker, kAssistantMarker, kEndMarker};
    const std::string* fields[] = {&e.system, &e.instruction, &e.input, &e.output};
    const char* names[] = {"system", "instruction", "input", "output"};
    for (int f = 0; f < 4; ++f) {
        for (const char* m : kMarkers) {
            if (contains(*fields[f], m)) {
                throw_validate(where + ": field '" + names[f] +
                               "' contains reserved role marker " + m);
            }
        }
    }
}

}  // namespace tau
