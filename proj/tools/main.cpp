#include "ehstack/cli.hpp"

int main(int argc, char** argv) { return ehstack::cli::run(argc, argv); }
