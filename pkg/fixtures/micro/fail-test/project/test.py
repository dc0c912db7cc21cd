"""Unit test stand-in: main() should turn 7.0 into 28.0."""
import re
import sys
from pathlib import Path

src = Path(__file__).resolve().parent / "src" / "main.rs"
text = src.read_text(encoding="utf-8")
m = re.search(r"val \*= ([0-9.]+);", text)
if not m:
    print("no multiplication found in src/main.rs")
    sys.exit(1)
result = 7.0 * float(m.group(1))
if result != 28.0:
    print(f"expected val = 28.0, got {result}")
    sys.exit(1)
print("ok")
