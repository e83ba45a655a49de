#pragma once

#include <stdexcept>
#include <string>

namespace structkit {

class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class OversizedParagraph : public Error {
public:
    OversizedParagraph(std::string doc_id, std::size_t index)
        : Error("paragraph exceeds chunk budget: doc=" + doc_id +
                " index=" + std::to_string(index)),
          doc_id(std::move(doc_id)), index(index) {}
    std::string doc_id;
    std::size_t index;
};

class GenerationFailed : public Error {
public:
    explicit GenerationFailed(const std::string& what) : Error("generation failed: " + what) {}
};

class EmbeddingFailed : public Error {
public:
    explicit EmbeddingFailed(const std::string& what) : Error("embedding failed: " + what) {}
};

class StructureParseError : public Error {
public:
    StructureParseError(const std::string& what, std::size_t line)
        : Error("structure parse error at line " + std::to_string(line) + ": " + what),
          line(line) {}
    std::size_t line;
};

class MissingTitle : public Error {
public:
    explicit MissingTitle(const std::string& title)
        : Error("expected title missing from structure: " + title), title(title) {}
    std::string title;
};

class DuplicateTitle : public Error {
public:
    explicit DuplicateTitle(const std::string& title)
        : Error("title covered more than once or unexpected: " + title), title(title) {}
    std::string title;
};

class UnknownChunk : public Error {
public:
    explicit UnknownChunk(const std::string& chunk_id)
        : Error("chunk not present in structure: " + chunk_id) {}
};

class UnknownLeaf : public Error {
public:
    explicit UnknownLeaf(const std::string& node_id)
        : Error("node is not a leaf of the structure: " + node_id) {}
};

class SynthesisParseError : public Error {
public:
    explicit SynthesisParseError(const std::string& what)
        : Error("QA synthesis response unparseable: " + what) {}
};

class SingularFit : public Error {
public:
    explicit SingularFit(const std::string& what) : Error("singular fit: " + what) {}
};

class DomainError : public Error {
public:
    explicit DomainError(const std::string& what) : Error(what) {}
};

}  // namespace structkit
