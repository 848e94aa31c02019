#include "syncd/prompts.hpp"

#include <cstdio>
#include <cstdlib>
#include <memory>

#include <unistd.h>

namespace syncd {

namespace {
const char* kInstructionHeader =
    "Role: system, Content: You are a language model expert in suggesting image captions "
    "for different object categories.\n"
    "Role: user, Content: suggest ten captions for images of a [{object_description}]. "
    "The caption should provide a [{TASK}]. DO NOT add any unnecessary adjectives or "
    "emotional words in the caption. Please keep the caption factual and terse but "
    "complete. DO NOT add any unnecessary speculation about the things that are not part "
    "of the image, such as \"the image is inspiring to viewers\" or \"seeing this makes "
    "you feel joy\". DO NOT add things such as \"creates a unique and entertaining "
    "visual\", as these descriptions are interpretations and not a part of the image "
    "itself. The description should be purely factual, with no subjective speculation.\n";

const char* kRigidExamples =
    "\nFollow this guidance for the captions:\n"
    "1. Generate captions of [{object_description}] in different backgrounds and scenes.\n"
    "2. Generate captions of [{object_description}] with another object in the scene.\n"
    "\nExample captions for \"White plastic bottle\" are:\n"
    "1. A white plastic bottle on a roadside cobblestone with stone bricks.\n"
    "2. A white plastic bottle is placed next to a steaming cup of coffee on a polished "
    "wooden table.\n"
    "\nExample captions for a \"blue truck\" are:\n"
    "1. A blue tank in a military storage facility with metal walls.\n"
    "2. A blue tank on a desert battlefield ground, with palm trees in the background.\n";

const char* kDeformableDescriptionExamples =
    "\nExample caption descriptions for the category \"cat\":\n"
    "1. The Siamese cat has blue almond-shaped eyes and cream-colored fur with dark "
    "chocolate points on the ears, face, paws, and tail.\n"
    "2. The white fluffy Maine Coon cat with a long and bushy tail spread out beside it, "
    "and its thick fur has a mix of brown, black, and white stripes.\n"
    "3. The Bengal cat with a marbled coat features a pattern of vivid orange and black "
    "spots.\n";

const char* kDeformableBackgroundExamples =
    "\nFollow this guidance for the captions:\n"
    "1. Generate captions of [{category}] in different backgrounds and scenes.\n"
    "2. Generate captions of [{category}] with another object in the scene.\n"
    "3. Generate captions of [{category}] with different stylistic representations.\n"
    "\nExample captions for the category \"cat\" are:\n"
    "1. Photo of a cat playing in a garden. The garden is filled with wildflowers.\n"
    "2. A cat is sitting beside a book in a library.\n"
    "3. Painting of a cat in watercolor style.\n";

std::string replace_all(std::string text, const std::string& from, const std::string& to) {
    std::size_t at = 0;
    while ((at = text.find(from, at)) != std::string::npos) {
        text.replace(at, from.size(), to);
        at += to.size();
    }
    return text;
}
}  // namespace

PromptTemplate builtin_template(TemplateKind kind) {
    std::string text = kInstructionHeader;
    switch (kind) {
        case TemplateKind::rigid_background:
            text += kRigidExamples;
            break;
        case TemplateKind::deformable_description:
            // Category stands in for the object description in the header.
            text = replace_all(text, "{object_description}", "{category}");
            text += kDeformableDescriptionExamples;
            break;
        case TemplateKind::deformable_background:
            text = replace_all(text, "{object_description}", "{category}");
            text += kDeformableBackgroundExamples;
            break;
    }
    return {kind, text};
}

std::string render_prompt_template(const PromptTemplate& tpl,
                                   const std::map<std::string, std::string>& slots) {
    std::string out = tpl.text;
    for (const auto& [name, value] : slots) out = replace_all(out, "{" + name + "}", value);
    const std::size_t open = out.find('{');
    if (open != std::string::npos) {
        const std::size_t close = out.find('}', open);
        throw TemplateError("unfilled template slot: " +
                            out.substr(open + 1, close == std::string::npos
                                                     ? std::string::npos
                                                     : close - open - 1));
    }
    return out;
}

std::vector<std::string> CommandCompleter::complete(const std::string& prompt) {
    // Prompt over stdin (via a private temp file), captions on stdout.
    char tmpl[] = "/tmp/syncd_prompt_XXXXXX";
    const int fd = mkstemp(tmpl);
    if (fd < 0) throw TemplateError("cannot create temp file for completer prompt");
    {
        FILE* f = fdopen(fd, "w");
        fwrite(prompt.data(), 1, prompt.size(), f);
        fclose(f);
    }
    const std::string cmd = command_ + " < " + tmpl;
    std::unique_ptr<FILE, int (*)(FILE*)> pipe(popen(cmd.c_str(), "r"), pclose);
    if (!pipe) {
        remove(tmpl);
        throw TemplateError("cannot launch completer command: " + command_);
    }
    std::vector<std::string> captions;
    char buf[4096];
    while (fgets(buf, sizeof(buf), pipe.get())) {
        std::string line(buf);
        while (!line.empty() && (line.back() == '\n' || line.back() == '\r')) line.pop_back();
        if (!line.empty()) captions.push_back(line);
    }
    pipe.reset();
    remove(tmpl);
    return captions;
}

}  // namespace syncd
