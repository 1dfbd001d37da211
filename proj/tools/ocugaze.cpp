#include "ocugaze/cli.hpp"

int main(int argc, char** argv) { return ocugaze::cli::run(argc, argv); }
