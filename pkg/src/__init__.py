# Empty file to make src a Python package
