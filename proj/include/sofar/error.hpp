#pragma once

#include <stdexcept>
#include <string>

namespace sofar {

class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class ShapeError : public Error {
public:
    explicit ShapeError(const std::string& msg) : Error(msg) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& msg) : Error(msg) {}
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

class DivergenceError : public Error {
public:
    explicit DivergenceError(const std::string& msg) : Error(msg) {}
};

#define SOFAR_CHECK(cond, msg)                                                 \
    do {                                                                       \
        if (!(cond)) throw ::sofar::Error(std::string(msg));                   \
    } while (0)

#define SOFAR_CHECK_SHAPE(cond, msg)                                           \
    do {                                                                       \
        if (!(cond)) throw ::sofar::ShapeError(std::string(msg));              \
    } while (0)

}  // namespace sofar
