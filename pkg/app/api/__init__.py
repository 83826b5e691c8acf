# package api