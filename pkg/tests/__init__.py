# Tests package init 