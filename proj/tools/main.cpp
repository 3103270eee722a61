#include "cli.hpp"

int main(int argc, char** argv) { return verlab::cli::run(argc, argv); }
