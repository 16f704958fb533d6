#include "ultr/cli.hpp"

int main(int argc, char** argv) { return ultr::cli::run(argc, argv); }
