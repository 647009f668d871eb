// Book chapters compile as doctests.
