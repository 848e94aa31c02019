#include <doctest.h>

#include "syncd/prompts.hpp"

using namespace syncd;

TEST_CASE("rigid template carries the bottle example and fills its slot") {
    const PromptTemplate tpl = builtin_template(TemplateKind::rigid_background);
    const std::string out =
        render_prompt_template(tpl, {{"object_description", "white plastic bottle"},
                                     {"TASK", "detailed background description"}});
    CHECK(out.find("a [white plastic bottle]") != std::string::npos);
    CHECK(out.find("A white plastic bottle on a roadside cobblestone") != std::string::npos);
    CHECK(out.find("detailed background description") != std::string::npos);
    CHECK(out.find('{') == std::string::npos);
}

TEST_CASE("deformable description template carries the cat example") {
    const PromptTemplate tpl = builtin_template(TemplateKind::deformable_description);
    const std::string out = render_prompt_template(
        tpl, {{"category", "cat"}, {"TASK", "detailed appearance description"}});
    CHECK(out.find("The Siamese cat has blue almond-shaped eyes") != std::string::npos);
    CHECK(out.find("a [cat]") != std::string::npos);
}

TEST_CASE("deformable background template lists stylistic guidance") {
    const PromptTemplate tpl = builtin_template(TemplateKind::deformable_background);
    const std::string out = render_prompt_template(
        tpl, {{"category", "dog"}, {"TASK", "scene description"}});
    CHECK(out.find("captions of [dog] with different stylistic representations") !=
          std::string::npos);
    CHECK(out.find("Painting of a cat in watercolor style.") != std::string::npos);
}

TEST_CASE("slot-free templates pass through byte-exact") {
    const PromptTemplate tpl{TemplateKind::rigid_background, "no slots at all"};
    CHECK(render_prompt_template(tpl, {}) == "no slots at all");
    CHECK(render_prompt_template(tpl, {{"unused", "x"}}) == "no slots at all");
}

TEST_CASE("substitution is verbatim and repeated") {
    const PromptTemplate tpl{TemplateKind::rigid_background, "{a} and {a} plus {b}"};
    CHECK(render_prompt_template(tpl, {{"a", "1"}, {"b", "two"}}) == "1 and 1 plus two");
}

TEST_CASE("missing slots are reported by name") {
    const PromptTemplate tpl{TemplateKind::rigid_background, "hello {object_description}"};
    try {
        render_prompt_template(tpl, {{"TASK", "x"}});
        FAIL("expected TemplateError");
    } catch (const TemplateError& e) {
        CHECK(std::string(e.what()).find("object_description") != std::string::npos);
    }
}

TEST_CASE("command completer reads one caption per line") {
    CommandCompleter completer("printf 'first caption\\nsecond caption\\n'");
    const auto captions = completer.complete("ignored prompt");
    REQUIRE(captions.size() == 2);
    CHECK(captions[0] == "first caption");
    CHECK(captions[1] == "second caption");
}

TEST_CASE("command completer passes the prompt over stdin") {
    CommandCompleter completer("cat");
    const auto captions = completer.complete("line one\nline two\n");
    REQUIRE(captions.size() == 2);
    CHECK(captions[0] == "line one");
    CHECK(captions[1] == "line two");
}

TEST_CASE("fixed completer returns its canned captions") {
    FixedCompleter completer({"a", "b", "c"});
    const auto captions = completer.complete("whatever");
    REQUIRE(captions.size() == 3);
    CHECK(captions[2] == "c");
}
