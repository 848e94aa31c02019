#ifndef SYNCD_PROMPTS_HPP
#define SYNCD_PROMPTS_HPP

#include <map>
#include <string>
#include <vector>

#include <stdexcept>

namespace syncd {

struct TemplateError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class TemplateKind { rigid_background, deformable_description, deformable_background };

// Caption-suggestion instruction template. Slots are written {name} in the
// template text and substituted verbatim.
struct PromptTemplate {
    TemplateKind kind;
    std::string text;
};

PromptTemplate builtin_template(TemplateKind kind);

// Byte-exact slot substitution. Throws TemplateError naming the first slot
// left unfilled.
std::string render_prompt_template(const PromptTemplate& tpl,
                                   const std::map<std::string, std::string>& slots);

// Text-completion backend: prompt in, candidate captions out (one per line).
class TextCompleter {
public:
    virtual ~TextCompleter() = default;
    virtual std::vector<std::string> complete(const std::string& prompt) = 0;
};

// Runs an external command, writing the prompt to its stdin and reading one
// caption per stdout line.
class CommandCompleter : public TextCompleter {
public:
    explicit CommandCompleter(std::string command) : command_(std::move(command)) {}
    std::vector<std::string> complete(const std::string& prompt) override;

private:
    std::string command_;
};

// Canned responses for tests and offline runs.
class FixedCompleter : public TextCompleter {
public:
    explicit FixedCompleter(std::vector<std::string> captions) : captions_(std::move(captions)) {}
    std::vector<std::string> complete(const std::string&) override { return captions_; }

private:
    std::vector<std::string> captions_;
};

}  // namespace syncd

#endif
