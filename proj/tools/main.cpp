#include "cli.hpp"

int main(int argc, char** argv) { return polypseg::cli::run(argc, argv); }
