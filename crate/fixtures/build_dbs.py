#!/usr/bin/env python3
"""Regenerate the fixture SQLite databases in fixtures/db/.

Output is deterministic; rerun after editing the DDL/data below.
"""
import os
import sqlite3

HERE = os.path.dirname(os.path.abspath(__file__))

DBS = {
    "shop": """
CREATE TABLE customers (
  id INTEGER PRIMARY KEY,
  name TEXT NOT NULL,
  city TEXT,
  email TEXT
);
CREATE TABLE products (
  id INTEGER PRIMARY KEY,
  name TEXT NOT NULL,
  price REAL,
  category TEXT
);
CREATE TABLE orders (
  id INTEGER PRIMARY KEY,
  customer_id INTEGER REFERENCES customers(id),
  product_id INTEGER REFERENCES products(id),
  quantity INTEGER,
  order_date TEXT
);
INSERT INTO customers VALUES
  (1, 'Alice', 'Berlin', 'alice@example.com'),
  (2, 'Bob', 'Paris', NULL),
  (3, 'Carol', 'Berlin', ''),
  (4, 'Dave', 'Madrid', 'dave@example.com'),
  (5, 'Eve', NULL, NULL);
INSERT INTO products VALUES
  (1, 'Laptop', 1200.0, 'electronics'),
  (2, 'Phone', 800.0, 'electronics'),
  (3, 'Desk', 300.0, 'furniture'),
  (4, 'Chair', 150.0, 'furniture'),
  (5, 'Pen', 2.5, 'office');
INSERT INTO orders VALUES
  (1, 1, 1, 1, '2024-01-05'),
  (2, 1, 5, 10, '2024-01-06'),
  (3, 2, 2, 1, '2024-02-11'),
  (4, 3, 3, 2, '2024-02-15'),
  (5, 3, 4, 4, '2024-03-01'),
  (6, 4, 2, 2, '2024-03-09'),
  (7, 4, 5, 20, '2024-03-10'),
  (8, 1, 3, 1, '2024-04-22');
""",
    "school": """
CREATE TABLE students (
  id INTEGER PRIMARY KEY,
  name TEXT NOT NULL,
  grade_level INTEGER,
  advisor TEXT
);
CREATE TABLE courses (
  id INTEGER PRIMARY KEY,
  title TEXT NOT NULL,
  credits INTEGER
);
CREATE TABLE enrollments (
  student_id INTEGER REFERENCES students(id),
  course_id INTEGER REFERENCES courses(id),
  score REAL,
  PRIMARY KEY (student_id, course_id)
);
INSERT INTO students VALUES
  (1, 'Ana', 10, 'Smith'),
  (2, 'Ben', 11, NULL),
  (3, 'Cleo', 10, 'Jones'),
  (4, 'Dan', 12, 'Smith'),
  (5, 'Ela', 11, '');
INSERT INTO courses VALUES
  (1, 'Algebra', 4),
  (2, 'Biology', 3),
  (3, 'Chemistry', 3),
  (4, 'Drama', 2);
INSERT INTO enrollments VALUES
  (1, 1, 91.5), (1, 2, 78.0), (2, 1, 65.0), (2, 3, 88.0),
  (3, 2, 95.0), (3, 4, NULL), (4, 1, 72.0), (4, 3, 81.0),
  (5, 4, 99.0);
""",
    "flights": """
CREATE TABLE airports (
  code TEXT PRIMARY KEY,
  city TEXT NOT NULL,
  country TEXT
);
CREATE TABLE flights (
  id INTEGER PRIMARY KEY,
  origin TEXT REFERENCES airports(code),
  destination TEXT REFERENCES airports(code),
  distance INTEGER,
  duration REAL
);
INSERT INTO airports VALUES
  ('BER', 'Berlin', 'Germany'),
  ('CDG', 'Paris', 'France'),
  ('MAD', 'Madrid', 'Spain'),
  ('LHR', 'London', 'United Kingdom'),
  ('FRA', 'Frankfurt', 'Germany');
INSERT INTO flights VALUES
  (1, 'BER', 'CDG', 880, 1.75),
  (2, 'CDG', 'MAD', 1050, 2.0),
  (3, 'MAD', 'LHR', 1260, 2.5),
  (4, 'LHR', 'BER', 930, 1.9),
  (5, 'FRA', 'MAD', 1420, 2.4),
  (6, 'BER', 'MAD', 1870, 3.0),
  (7, 'CDG', 'LHR', 350, 1.2);
""",
}


def main() -> None:
    out = os.path.join(HERE, "db")
    os.makedirs(out, exist_ok=True)
    for name, script in DBS.items():
        path = os.path.join(out, f"{name}.sqlite")
        if os.path.exists(path):
            os.remove(path)
        conn = sqlite3.connect(path)
        conn.executescript(script)
        conn.commit()
        conn.execute("VACUUM")
        conn.close()
        print(path)


if __name__ == "__main__":
    main()
