"""hocpdmp Test Suite"""
